#include <gtest/gtest.h>

#include <chrono>
#include <cstring>

#include "egowm/model/audit.hpp"
#include "egowm/model/codec.hpp"
#include "egowm/model/embeddings.hpp"
#include "egowm/world/clip.hpp"

namespace {

using namespace egowm;
using namespace egowm::model;

ModelConfig desk() { return ModelConfig::desk(); }

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

TEST(HandStreamEncoder, PublishedScaleShape) {
  EXPECT_EQ(infer_chain(hke_chain(ModelConfig::paper()), {3, 81, 480, 480}), (Shape{5120, 21, 30, 30}));
}

TEST(HandStreamEncoder, ZeroVolumeGivesZeroTokens) {
  ParameterSet<float> ps;
  Rng rng(1);
  HandStreamEncoder<float> enc(ps, "hke", desk(), rng);
  const auto out = enc(ops::constant(Tensor<float>(Shape{3, 9, 32, 32})));
  for (float v : out.tokens.value().span()) EXPECT_EQ(v, 0.0f);
}

TEST(HandStreamEncoder, DeskScaleMatchesDryRun) {
  ParameterSet<float> ps;
  Rng rng(2);
  const auto cfg = desk();
  HandStreamEncoder<float> enc(ps, "hke", cfg, rng);
  const auto clip = world::generate_clip(0, 9, 32);
  const auto out = enc(ops::constant(hand_volume<float>(clip.hand_maps)));
  const Shape dry = infer_chain(hke_chain(cfg), {3, 9, 32, 32});
  EXPECT_EQ((Shape{out.width(), out.grid.t, out.grid.h, out.grid.w}), dry);
  EXPECT_EQ(out.grid, cfg.token_grid());
  EXPECT_EQ(out.count(), 12);
  EXPECT_EQ(out.stream, Stream::hke);
}

TEST(HandStreamEncoder, RejectsWrongChannelCount) {
  ParameterSet<float> ps;
  Rng rng(3);
  HandStreamEncoder<float> enc(ps, "hke", desk(), rng);
  EXPECT_THROW(enc(ops::constant(Tensor<float>(Shape{1, 9, 32, 32}))), ShapeError);
}

TEST(ReferenceHandEncoder, PublishedAndDeskScaleShapes) {
  const Shape paper = infer_chain(reference_chain(ModelConfig::paper()), {3, 480, 480});
  EXPECT_EQ((Shape{paper[1], paper[2], paper[0]}), (Shape{60, 60, 20}));
  ParameterSet<float> ps;
  Rng rng(4);
  ReferenceHandEncoder<float> enc(ps, "ref", desk(), rng);
  const auto f = enc(ops::constant(Tensor<float>(Shape{3, 32, 32})));
  EXPECT_EQ(f.shape(), (Shape{20, 4, 4}));
  for (float v : f.value().span()) EXPECT_EQ(v, 0.0f);
}

TEST(EgoMotionEncoder, PublishedScaleShapes) {
  const auto cfg = ModelConfig::paper();
  EXPECT_EQ(infer_chain(eme_downsampler_chain(cfg), {6, 81, 480, 480}), (Shape{64, 21, 60, 60}));
  const Shape out = infer_chain(eme_chain(cfg), {6, 81, 480, 480});
  EXPECT_EQ(out, (Shape{5120, 21, 30, 30}));
  EXPECT_EQ(out[1] * out[2] * out[3], 18900);
}

TEST(EgoMotionEncoder, DeskScaleMatchesDryRun) {
  ParameterSet<float> ps;
  Rng rng(5);
  const auto cfg = desk();
  EgoMotionEncoder<float> enc(ps, "eme", cfg, rng);
  const auto clip = world::generate_clip(1, 9, 32);
  const auto vol = geometry::plucker_volume<float>(clip.intrinsics, clip.trajectory, 32, 32);
  const auto x = ops::constant(vol);
  EXPECT_EQ(enc.downsample(x).shape(), infer_chain(eme_downsampler_chain(cfg), {6, 9, 32, 32}));
  const auto out = enc(x);
  EXPECT_EQ((Shape{out.width(), out.grid.t, out.grid.h, out.grid.w}), infer_chain(eme_chain(cfg), {6, 9, 32, 32}));
  EXPECT_EQ(out.grid, cfg.token_grid());
  EXPECT_TRUE(out.tokens.value().all_finite());
}

TEST(EgoMotionEncoder, RejectsIndivisibleExtents) {
  auto cfg = desk();
  EXPECT_THROW(infer_chain(eme_chain(cfg), {6, 9, 40, 40}), ShapeError);
  ParameterSet<float> ps;
  Rng rng(6);
  EgoMotionEncoder<float> enc(ps, "eme", cfg, rng);
  EXPECT_THROW(enc(ops::constant(Tensor<float>(Shape{6, 9, 40, 40}))), ShapeError);
}

TEST(EgoMotionEncoder, DownsamplerIsCausal) {
  ParameterSet<float> ps;
  Rng rng(7);
  EgoMotionEncoder<float> enc(ps, "eme", desk(), rng);
  auto a = rng.normal_tensor<float>({6, 9, 32, 32});
  auto b = a;
  const int64_t plane = 32 * 32;
  for (int64_t c = 0; c < 6; ++c)
    for (int64_t f = 5; f < 9; ++f)
      for (int64_t p = 0; p < plane; ++p) b[(c * 9 + f) * plane + p] += 3.0f;
  const auto ya = enc.downsample(ops::constant(a)).value(), yb = enc.downsample(ops::constant(b)).value();
  ASSERT_EQ(ya.shape(), (Shape{16, 3, 4, 4}));
  // Latent frames 0 and 1 see input frames 0..4 only.
  for (int64_t c = 0; c < 16; ++c)
    for (int64_t t = 0; t < 2; ++t)
      for (int64_t p = 0; p < 16; ++p) EXPECT_EQ(ya[(c * 3 + t) * 16 + p], yb[(c * 3 + t) * 16 + p]);
  EXPECT_GT(max_abs_diff(ya, yb), 1e-3);
}

TEST(TemporalAttention, IdentityProjectionsKeepConstantFeature) {
  ParameterSet<double> ps;
  Rng rng(8);
  TemporalAttention<double> attn(ps, "ta", 4, 2, rng);
  for (auto* lin : {&attn.q(), &attn.k(), &attn.v(), &attn.o()}) {
    auto& w = lin->weight().mutable_value();
    w.fill(0.0);
    for (int64_t i = 0; i < 4; ++i) w.at(i, i) = 1.0;
  }
  Tensor<double> x(Shape{4, 5, 3, 3});
  const auto base = rng.normal_tensor<double>({4, 1, 3, 3});
  for (int64_t c = 0; c < 4; ++c)
    for (int64_t t = 0; t < 5; ++t)
      for (int64_t p = 0; p < 9; ++p) x[(c * 5 + t) * 9 + p] = base[c * 9 + p];
  const auto y = attn(ops::constant(x)).value();
  EXPECT_LE(max_abs_diff(x, y), 1e-6);
}

TEST(ObjectEntityEncoder, PublishedScaleLatentGrid) {
  const auto entries = shape_audit(ModelConfig::paper());
  EXPECT_EQ(*find_entry(entries, "oee.latent"), (Shape{16, 21, 60, 60}));
  EXPECT_EQ(*find_entry(entries, "oee.tokens"), (Shape{18900, 5120}));
}

TEST(ObjectEntityEncoder, EmptyMaskMatchesBlackFrame) {
  ParameterSet<float> ps;
  Rng rng(9);
  const auto cfg = desk();
  LatentCodec<float> codec(ps, "codec", cfg, rng);
  ObjectEntityEncoder<float> oee(ps, "oee", cfg, rng);
  const auto clip = world::generate_clip(2, 9, 32);
  const auto empty = object_mask_image<float>(clip.frame(0), Tensor<float>(Shape{1, 32, 32}));
  const auto a = oee(empty, codec), b = oee(Tensor<float>(Shape{3, 32, 32}), codec);
  EXPECT_TRUE(bit_equal(a.tokens.value(), b.tokens.value()));
  EXPECT_EQ(a.grid, cfg.token_grid());
  EXPECT_EQ(a.stream, Stream::oee);
  EXPECT_NE(a.shift, (GridPos{}));
}

TEST(ObjectEntityEncoder, ShiftChangesRotation) {
  ParameterSet<float> ps;
  Rng rng(10);
  const auto cfg = desk();
  LatentCodec<float> codec(ps, "codec", cfg, rng);
  ObjectEntityEncoder<float> oee(ps, "oee", cfg, rng);
  const auto clip = world::generate_clip(2, 9, 32);
  const auto tok = oee(object_mask_image<float>(clip.frame(0), Tensor<float>(Shape{1, 32, 32}, std::vector<float>(clip.object_masks.data(), clip.object_masks.data() + 1024))), codec);
  const auto r0 = ops::rope(tok.tokens, tok.positions(), GridPos{}, cfg.heads).value();
  const auto r1 = ops::rope(tok.tokens, tok.positions(), tok.shift, cfg.heads).value();
  EXPECT_GT(max_abs_diff(r0, r1), 1e-4);
}

TEST(Tokens, GridIndexRoundTrip) {
  const Grid g{3, 4, 5};
  const auto pos = grid_positions(g.t, g.h, g.w);
  for (int64_t i = 0; i < g.count(); ++i) {
    EXPECT_EQ(grid_index(pos[size_t(i)], g.h, g.w), i);
    EXPECT_EQ(grid_unindex(i, g.h, g.w), pos[size_t(i)]);
  }
  Rng rng(11);
  const auto fmap = rng.normal_tensor<float>({6, 3, 4, 5});
  const auto tokens = flatten_tokens(ops::constant(fmap));
  EXPECT_EQ(tokens.shape(), (Shape{60, 6}));
  EXPECT_EQ(tokens.value().at(grid_index(GridPos{2, 1, 3}, 4, 5), 4), fmap.at(4, 2, 1, 3));
  EXPECT_TRUE(bit_equal(unflatten_tokens(tokens, g).value(), fmap));
}

TEST(ShapeAudit, PublishedScaleMatchesPublishedShapes) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = shape_audit(ModelConfig::paper());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& target : published_shapes()) {
    const Shape* got = find_entry(entries, target.name);
    ASSERT_NE(got, nullptr) << target.name;
    EXPECT_EQ(*got, target.shape) << target.name;
  }
  EXPECT_LT(secs, 1.0);
}

TEST(ShapeAudit, DeskScaleGrids) {
  const auto entries = shape_audit(desk());
  EXPECT_EQ(*find_entry(entries, "codec.latent"), (Shape{16, 3, 4, 4}));
  EXPECT_EQ(*find_entry(entries, "main.tokens"), (Shape{12, 64}));
  EXPECT_EQ(*find_entry(entries, "anchor"), (Shape{20, 3, 4, 4}));
  EXPECT_EQ(*find_entry(entries, "reference.feature_hwc"), (Shape{4, 4, 20}));
}

TEST(LatentCodec, FirstLatentFrameSeesOnlyFirstFrame) {
  ParameterSet<float> ps;
  Rng rng(12);
  LatentCodec<float> codec(ps, "codec", desk(), rng);
  auto a = rng.uniform_tensor<float>({3, 9, 32, 32}, 0, 1);
  auto b = a;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t f = 1; f < 9; ++f) b.at(c, f, 7, 9) += 0.5f;
  const auto za = codec.encode(ops::constant(a)).value(), zb = codec.encode(ops::constant(b)).value();
  ASSERT_EQ(za.shape(), (Shape{16, 3, 4, 4}));
  for (int64_t c = 0; c < 16; ++c)
    for (int64_t p = 0; p < 16; ++p) EXPECT_EQ(za[(c * 3) * 16 + p], zb[(c * 3) * 16 + p]);
  EXPECT_EQ(codec.decode(ops::constant(za)).shape(), (Shape{3, 9, 32, 32}));
}

TEST(LatentCodec, PretrainingReducesReconstructionError) {
  ParameterSet<float> ps;
  Rng rng(13);
  const auto cfg = desk();
  LatentCodec<float> codec(ps, "codec", cfg, rng);
  const auto video = world::channels_first(world::generate_clip(4, 9, 32).rgb);
  const auto err = [&] {
    NoGradGuard g;
    return double(ops::mse(codec.reconstruct(ops::constant(video)), ops::constant(video)).value()[0]);
  };
  const double before = err();
  const auto losses = pretrain_codec(codec, codec.parameters(ps, "codec"), {video}, {200, 2e-3, 0});
  EXPECT_LT(err(), 0.5 * before);
  EXPECT_LT(losses.back(), losses.front());
  const auto z = codec.encode_scaled(video);
  double sq = 0;
  for (float v : z.span()) sq += double(v) * v;
  EXPECT_NEAR(std::sqrt(sq / double(z.size())), 1.0, 1e-3);
}

}  // namespace
