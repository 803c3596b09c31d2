#include "asrf/diffcore/adam.hpp"
#include "asrf/diffcore/checkpoint.hpp"
#include "asrf/diffcore/encoding.hpp"
#include "asrf/diffcore/gradcheck.hpp"
#include "asrf/diffcore/mlp.hpp"
#include "asrf/diffcore/tape.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace asrf;
using namespace asrf::diffcore;

namespace {

Mat<double> random_mat(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Mat<double> m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
  return m;
}

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

// Linear probe of the output and its tangent; FD over every parameter.
TEST(Mlp, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(1);
  MlpSpec spec{{4, 6, 5, 3}, {2}, 2, Activation::None};
  ParamStore<double> store;
  const Mlp<double> mlp(spec, store, "m", rng);
  const Mat<double> x = random_mat(rng, 4, 7), dx = random_mat(rng, 4, 7), skip = random_mat(rng, 2, 7),
                    dskip = random_mat(rng, 2, 7);
  const Mat<double> c = random_mat(rng, 3, 7), cd = random_mat(rng, 3, 7);

  auto loss = [&](const ParamStore<double>& s) {
    Mat<double> dy;
    const Mat<double> y = mlp.forward_tangent(s, x, dx, &skip, &dskip, &dy);
    return (c.array() * y.array()).sum() + (cd.array() * dy.array()).sum();
  };
  MlpCache<double> cache;
  Mat<double> dy;
  mlp.forward_tangent(store, x, dx, &skip, &dskip, &dy, &cache);
  store.zero_grad();
  mlp.backward(store, cache, c, &cd);
  const auto an = store.flat_grads();

  ParamStore<double> probe = store;
  const auto fd = central_difference(
      [&](const std::vector<double>& v) {
        for (std::size_t k = 0; k < v.size(); ++k) probe.flat_value(k) = v[k];
        return loss(probe);
      },
      store.flat_values(), 1e-6);
  EXPECT_LT(max_relative_error(an, fd), 1e-6);
}

TEST(Mlp, InputAndSkipGradientsMatchFiniteDifferences) {
  Rng rng(2);
  MlpSpec spec{{3, 8, 8, 2}, {1}, 3, Activation::ReLU};
  ParamStore<double> store;
  const Mlp<double> mlp(spec, store, "m", rng);
  for (auto& b : store)
    if (b.name.back() == 'b') for (auto& v : b.value) v = 0.3;  // keep ReLUs mostly active
  Mat<double> x = random_mat(rng, 3, 5), skip = random_mat(rng, 3, 5);
  const Mat<double> c = random_mat(rng, 2, 5);
  MlpCache<double> cache;
  mlp.forward(store, x, &skip, &cache);
  Mat<double> gx, gs;
  mlp.backward(store, cache, c, nullptr, &gx, &gs);

  std::vector<double> flat(x.data(), x.data() + x.size());
  flat.insert(flat.end(), skip.data(), skip.data() + skip.size());
  const auto fd = central_difference(
      [&](const std::vector<double>& v) {
        Mat<double> xx = Eigen::Map<const Mat<double>>(v.data(), 3, 5);
        Mat<double> ss = Eigen::Map<const Mat<double>>(v.data() + 15, 3, 5);
        return (c.array() * mlp.forward(store, xx, &ss).array()).sum();
      },
      flat, 1e-6);
  std::vector<double> an(gx.data(), gx.data() + gx.size());
  an.insert(an.end(), gs.data(), gs.data() + gs.size());
  EXPECT_LT(max_relative_error(an, fd), 1e-6);
}

TEST(Mlp, TangentIsDirectionalDerivative) {
  Rng rng(3);
  MlpSpec spec{{2, 16, 16, 3}, {}, 0, Activation::None};
  ParamStore<double> store;
  const Mlp<double> mlp(spec, store, "m", rng);
  const Mat<double> x = random_mat(rng, 2, 4), dx = random_mat(rng, 2, 4);
  Mat<double> dy;
  mlp.forward_tangent(store, x, dx, nullptr, nullptr, &dy);
  const double h = 1e-6;
  const Mat<double> fd = (mlp.forward(store, x + h * dx) - mlp.forward(store, x - h * dx)) / (2 * h);
  EXPECT_LT((fd - dy).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Mlp, RejectsBadShapesAndMissingCache) {
  Rng rng(4);
  ParamStore<double> store;
  const Mlp<double> mlp(MlpSpec{{3, 4, 1}, {}, 0, Activation::None}, store, "m", rng);
  EXPECT_THROW(mlp.forward(store, Mat<double>::Zero(2, 1)), ValidationError);
  MlpCache<double> empty;
  EXPECT_THROW(mlp.backward(store, empty, Mat<double>::Zero(1, 1)), ValidationError);
  EXPECT_THROW(Mlp<double>(MlpSpec{{3, 1}, {}, 0, Activation::None}, store, "n", rng), ValidationError);
}

TEST(PositionalEncoding, LayoutAndBackward) {
  const PositionalEncoding pe{3, true};
  EXPECT_EQ(pe.output_width(3), 21);
  const auto e = positional_encoding({0.25}, 2);
  ASSERT_EQ(e.size(), 5u);
  EXPECT_DOUBLE_EQ(e[0], 0.25);
  EXPECT_NEAR(e[1], std::sin(kPi * 0.25), 1e-15);
  EXPECT_NEAR(e[2], std::cos(kPi * 0.25), 1e-15);
  EXPECT_NEAR(e[3], std::sin(2 * kPi * 0.25), 1e-15);

  Rng rng(5);
  const Mat<double> x = random_mat(rng, 3, 4), c = random_mat(rng, 21, 4);
  const Mat<double> enc = pe.encode(x);
  const Mat<double> g = pe.backward(enc, c, 3);
  const auto fd = central_difference(
      [&](const std::vector<double>& v) {
        return (c.array() * pe.encode(Mat<double>(Eigen::Map<const Mat<double>>(v.data(), 3, 4))).array()).sum();
      },
      std::vector<double>(x.data(), x.data() + x.size()), 1e-6);
  EXPECT_LT(max_relative_error(std::vector<double>(g.data(), g.data() + g.size()), fd), 1e-7);
}

TEST(Tape, ReverseModeMatchesFiniteDifferences) {
  auto f_val = [](const std::vector<double>& p) {
    return std::exp(p[0]) * std::sin(p[1]) / (1.0 + p[2] * p[2]) + std::sqrt(p[0] * p[0] + 1.0) - std::log(p[2] + 3.0);
  };
  const std::vector<double> p0 = {0.3, -1.2, 0.7};
  Tape tape;
  ParamStore<double> store;
  store.add("p", {3});
  store.at("p").value.assign(p0.begin(), p0.end());
  const auto vars = bind_params(tape, store);
  const Var y = exp(vars[0]) * sin(vars[1]) / (1.0 + square(vars[2])) + sqrt(square(vars[0]) + 1.0) - log(vars[2] + 3.0);
  EXPECT_NEAR(y.value(), f_val(p0), 1e-14);
  backward(y, vars, store);
  EXPECT_LT(max_relative_error(store.flat_grads(), central_difference(f_val, p0, 1e-6)), 1e-8);
}

TEST(Tape, MixingTapesIsRejected) {
  Tape a, b;
  const Var x = a.variable(1.0), y = b.variable(2.0);
  EXPECT_THROW(x + y, ValidationError);
  EXPECT_THROW(b.gradient(x), ValidationError);
}

TEST(Adam, FirstStepMovesEachParameterByLr) {
  ParamStore<double> store;
  store.add("a", {3});
  store.add("b", {2});
  store.at("a").grad = {2.0, -0.5, 1e3};
  store.at("b").grad = {1.0, -1.0};
  AdamState st(store, 0.1);
  st.lr_scale = {1.0, 10.0};
  adam_step(store, st);
  // m_hat / sqrt(v_hat) = sign(g) on the first step
  EXPECT_NEAR(store.at("a").value[0], -0.1, 1e-6);
  EXPECT_NEAR(store.at("a").value[1], 0.1, 1e-6);
  EXPECT_NEAR(store.at("a").value[2], -0.1, 1e-6);
  EXPECT_NEAR(store.at("b").value[0], -1.0, 1e-5);
  EXPECT_EQ(store.at("a").grad[0], 0.0);
  st.lr_scale = {1.0};
  EXPECT_THROW(adam_step(store, st), ValidationError);
}

TEST(Adam, ConvergesOnAQuadratic) {
  ParamStore<double> store;
  store.add("x", {2});
  store.at("x").value = {3.0, -4.0};
  AdamState st(store, 0.05);
  for (int i = 0; i < 2000; ++i) {
    auto& b = store.at("x");
    b.grad = {2 * (b.value[0] - 1.0), 20 * (b.value[1] + 2.0)};
    adam_step(store, st);
  }
  EXPECT_NEAR(store.at("x").value[0], 1.0, 1e-3);
  EXPECT_NEAR(store.at("x").value[1], -2.0, 1e-3);
}

TEST(ParamStore, NamedBlocksAndFlatViews) {
  ParamStore<float> s;
  s.add("w", {2, 3});
  s.add("b", {2});
  EXPECT_THROW(s.add("w", {1}), ValidationError);
  EXPECT_THROW(s.at("nope"), ValidationError);
  EXPECT_EQ(s.num_params(), 8u);
  EXPECT_EQ(s.at("w").rows(), 2);
  EXPECT_EQ(s.at("w").cols(), 3);
  s.flat_value(6) = 5.f;
  EXPECT_EQ(s.at("b").value[0], 5.f);
  EXPECT_THROW(s.flat_value(8), ValidationError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(6);
  ParamStore<double> a;
  a.add("x", {3, 2});
  a.add("y", {5});
  for (auto& b : a)
    for (auto& v : b.value) v = rng.normal();
  const auto path = temp_path("asrf_ckpt_rt.bin");
  {
    CheckpointWriter w(path);
    w.write_store("s", a);
    w.write("meta/v", {1}, {42.0});
  }
  const auto rec = read_checkpoint(path);
  ParamStore<double> b;
  b.add("x", {3, 2});
  b.add("y", {5});
  load_store(rec, "s", b);
  EXPECT_EQ(a.flat_values(), b.flat_values());
  EXPECT_EQ(rec.at("meta/v").data[0], 42.0);

  ParamStore<double> wrong;
  wrong.add("x", {2, 3});
  EXPECT_THROW(load_store(rec, "s", wrong), ValidationError);
  ParamStore<double> missing;
  missing.add("z", {1});
  EXPECT_THROW(load_store(rec, "s", missing), ValidationError);

  // truncation anywhere inside a record is detected
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  EXPECT_THROW(read_checkpoint(path), ValidationError);
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTACKPT";
  }
  EXPECT_THROW(read_checkpoint(path), ValidationError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_checkpoint(path), ValidationError);
}

TEST(Gradcheck, RelativeErrorHandlesZeros) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
  EXPECT_LE(max_relative_error({1.0, 1e-12}, {1.0, 0.0}), 1e-9);
  const auto d = forward_derivative([](Dual<double> t) { return std::vector<Dual<double>>{sin(t) * t}; }, 0.5);
  EXPECT_NEAR(d[0], std::cos(0.5) * 0.5 + std::sin(0.5), 1e-15);
}
