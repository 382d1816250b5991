// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <set>

#include "test_support.hpp"
#include "voxstream/device/device_state.hpp"

using namespace voxstream;
using namespace voxstream::device;
using voxstream::testing::TempDir;

namespace {

class FakeClock final : public Clock {
 public:
  double now_ms() override { return t; }
  double t = 0.0;
};

std::unique_ptr<core::Octree> full_tree(const TempDir& dir, const Vec3u& dims, const Vec3u& brick, int channels = 1,
                                        std::uint32_t threshold = 0) {
  core::VolumeDescriptor d;
  d.dims = dims;
  d.channels = channels;
  core::BrickPoolConfig cfg;
  cfg.brick_dims = brick;
  cfg.homogeneity_threshold = threshold;
  cfg.page_bricks = 4;
  cfg.ram_page_limit = 4;
  auto t = core::Octree::create(d, cfg, dir / "work.vxbp");
  voxstream::testing::insert_whole(*t, voxstream::testing::random_volume(dims, channels, 60000, 99));
  t->drain_events();
  return t;
}

DeviceConfig slots(const core::Octree& t, std::uint64_t n, double budget = 1000.0) {
  return {n * t.layout().brick_bytes(), budget};
}

// Uploads the given nodes right away, in order.
void make_resident(DeviceState& ds, std::initializer_list<std::uint64_t> nodes) {
  for (std::uint64_t n : nodes) ds.mark_requested(n);
  auto plan = ds.process_flags(Strategy::Refinement);
  ASSERT_EQ(ds.upload(plan).uploaded, nodes.size());
}

}  // namespace

TEST(NodeEntry, ExhaustiveRoundTrip) {
  const std::uint32_t pointers[] = {0, 1, kMaxChildPointer};
  const std::uint32_t slot_values[] = {0, 1, 0xFFFFFFFFu};
  for (SampleFormat fmt : {SampleFormat::U8, SampleFormat::U16}) {
    for (int C = 1; C <= 4; ++C) {
      const NodeCodec codec(C, fmt);
      const std::uint16_t extremes[] = {0, static_cast<std::uint16_t>(format_max(fmt))};
      std::size_t cases = 0;
      for (int flags = 0; flags < 4; ++flags)
        for (std::uint32_t p : pointers) {
          NodeState s;
          s.in_buffer = flags & 1;
          s.not_homogeneous = flags & 2;
          s.child_pointer = p;
          if (s.in_buffer) {
            for (std::uint32_t slot : slot_values) {
              s.slot = slot;
              ASSERT_EQ(codec.unpack(codec.pack(s)), s);
              ++cases;
            }
            continue;
          }
          for (int combo = 0; combo < (1 << C); ++combo) {
            for (int c = 0; c < C; ++c) s.avg[c] = extremes[(combo >> c) & 1];
            ASSERT_EQ(codec.unpack(codec.pack(s)), s) << "C=" << C << " combo " << combo;
            ++cases;
          }
        }
      EXPECT_EQ(cases, 2u * 3 * 3 + 2u * 3 * (1u << C));
    }
  }
}

TEST(NodeEntry, BitLayout) {
  const NodeCodec codec(1, SampleFormat::U16);
  NodeState leaf;
  leaf.avg[0] = 4321;
  EXPECT_EQ(codec.pack(leaf), std::uint64_t{4321} << 24);
  NodeState s{true, true, 12, 5, {}};
  const std::uint64_t e = codec.pack(s);
  EXPECT_EQ(e, 1u | 2u | (12ull << 2) | (5ull << 24));
  EXPECT_EQ(codec.unpack(e), s);
  EXPECT_EQ(NodeCodec::first_child(1), 1u);
  EXPECT_EQ(NodeCodec::first_child(2), 9u);
}

TEST(NodeEntry, RejectsOverflowingChildPointer) {
  const NodeCodec codec(2, SampleFormat::U16);
  NodeState s;
  s.child_pointer = kMaxChildPointer + 1;
  EXPECT_THROW(codec.pack(s), BoundsError);
  EXPECT_THROW(NodeCodec(5, SampleFormat::U16), ConfigError);
}

TEST(NodeEntry, ChannelWidths) {
  EXPECT_EQ(NodeCodec(1, SampleFormat::U16).avg_bits(), 40);
  EXPECT_EQ(NodeCodec(2, SampleFormat::U16).avg_bits(), 20);
  EXPECT_EQ(NodeCodec(3, SampleFormat::U16).avg_bits(), 13);
  EXPECT_EQ(NodeCodec(4, SampleFormat::U16).avg_bits(), 10);
}

TEST(NodeEntry, CompleteEightLevelBuffer) {
  EXPECT_EQ(node_buffer_bytes(8), (std::uint64_t{16777216} - 1) / 7 * 8);
  EXPECT_EQ(node_buffer_bytes(8), 19173960u);
  EXPECT_NEAR(double(node_buffer_bytes(8)) / 1e6, 19.2, 0.05);
}

TEST(NodeEntry, QuantizationErrorBounds) {
  for (int C = 1; C <= 4; ++C) {
    const NodeCodec c16(C, SampleFormat::U16), c8(C, SampleFormat::U8);
    int worst16 = 0, worst8 = 0;
    for (std::uint32_t v = 0; v <= 0xFFFF; ++v) worst16 = std::max(worst16, std::abs(int(c16.roundtrip(v)) - int(v)));
    for (std::uint32_t v = 0; v <= 0xFF; ++v) worst8 = std::max(worst8, std::abs(int(c8.roundtrip(v)) - int(v)));
    // Half an LSB of the channel width, in sample units, rounded up to whole units.
    const double half_lsb = C <= 2 ? 0.0 : 65535.0 / double((1u << (40 / C)) - 1) / 2.0;
    EXPECT_LE(worst16, int(std::ceil(half_lsb))) << C;
    EXPECT_EQ(worst8, 0) << C;
    if (C <= 2) EXPECT_EQ(worst16, 0);
    if (C == 3) EXPECT_LE(worst16, 4);
  }
}

TEST(NodeEntry, QuantizationRandomizedC3) {
  const NodeCodec codec(3, SampleFormat::U16);
  std::mt19937 rng(3);
  int worst = 0;
  for (int i = 0; i < 100000; ++i) {
    NodeState s;
    for (int c = 0; c < 3; ++c) s.avg[c] = static_cast<std::uint16_t>(rng());
    const NodeState u = codec.unpack(codec.pack(s));
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(int(u.avg[c]) - int(s.avg[c])));
  }
  EXPECT_LE(worst, 4);
}

TEST(DeviceState, MirrorsTreeOnConstruction) {
  TempDir dir;
  auto t = full_tree(dir, {32, 32, 32}, {8, 8, 8});
  DeviceState ds(*t, slots(*t, 4));
  EXPECT_EQ(ds.node_count(), core::complete_tree_nodes(3));
  const std::uint64_t root = ds.entry(0);
  EXPECT_EQ(NodeCodec::child_pointer(root), 1u);
  EXPECT_TRUE(NodeCodec::not_homogeneous(root));
  EXPECT_FALSE(NodeCodec::in_buffer(root));
  EXPECT_EQ(ds.slot_count(), 4u);
  EXPECT_TRUE(ds.consistent());
}

TEST(DeviceState, RejectsDeepTrees) {
  TempDir dir;
  core::VolumeDescriptor d;
  d.dims = {1024, 2, 2};
  core::BrickPoolConfig cfg;
  cfg.brick_dims = {2, 2, 2};
  auto t = core::Octree::create(d, cfg, dir / "w.vxbp");
  ASSERT_EQ(t->layout().depth(), 9);
  EXPECT_THROW(DeviceState(*t, {}), ConfigError);
}

TEST(DeviceState, EmptyEventListLeavesBufferUnchanged) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 2));
  const std::vector<std::uint64_t> before(ds.node_buffer().begin(), ds.node_buffer().end());
  ds.apply_events({});
  EXPECT_TRUE(std::equal(before.begin(), before.end(), ds.node_buffer().begin()));
}

TEST(DeviceState, OutOfRangeEventThrows) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 2));
  const core::ChangeEvent ev{core::EventKind::NodeUpdated, ds.node_count()};
  EXPECT_THROW(ds.apply_events(std::span(&ev, 1)), BoundsError);
}

TEST(DeviceState, IncrementalEventsMatchRebuild) {
  TempDir dir;
  const Vec3u dims{64, 64, 64};
  core::VolumeDescriptor d;
  d.dims = dims;
  d.channels = 2;
  core::BrickPoolConfig cfg;
  cfg.brick_dims = {8, 8, 8};
  cfg.homogeneity_threshold = 2000;
  cfg.page_bricks = 8;
  auto vol = voxstream::testing::blob_volume(dims, 2, 30000, 4);
  for (auto& ch : vol.data)
    for (auto& s : ch) s = s < 6000 ? 0 : s;
  auto t = core::Octree::create(d, cfg, dir / "w.vxbp");
  DeviceState live(*t, slots(*t, 16));
  std::mt19937_64 rng(8);
  for (int i = 0; i < 60; ++i) {
    std::uniform_int_distribution<std::uint32_t> o(0, 48), e(1, 16), ch(0, 1);
    const Vec3u org{o(rng), o(rng), o(rng)}, ext{e(rng), e(rng), e(rng)};
    const int c = int(ch(rng));
    t->insert_block(c, org, ext, vol.block(c, org, ext));
    live.sync();
  }
  voxstream::testing::insert_whole(*t, vol);
  live.sync();
  DeviceState rebuilt(*t, slots(*t, 16));
  ASSERT_EQ(live.node_count(), rebuilt.node_count());
  for (std::uint64_t i = 0; i < live.node_count(); ++i) ASSERT_EQ(live.entry(i), rebuilt.entry(i)) << i;
}

TEST(DeviceState, UpdateReleasesResidentBrick) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 4));
  make_resident(ds, {9});
  ASSERT_TRUE(NodeCodec::in_buffer(ds.entry(9)));
  t->insert_block(0, {0, 0, 0}, {1, 1, 1}, std::vector<std::uint16_t>{1234});
  ds.sync();
  EXPECT_FALSE(NodeCodec::in_buffer(ds.entry(9)));
  EXPECT_EQ(ds.occupied_slots(), 0u);
  EXPECT_EQ(ds.codec().avg(ds.entry(9), 0), t->node(9)->avg[0]);
  EXPECT_TRUE(ds.consistent());
}

TEST(DeviceState, UploadedBrickMatchesTree) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4}, 2);
  t->mark_finished();
  t->fill_borders();
  t->drain_events();
  DeviceState ds(*t, slots(*t, 4));
  make_resident(ds, {0, 3, 20});
  for (std::uint64_t n : {0, 3, 20}) {
    const std::uint64_t e = ds.entry(n);
    ASSERT_TRUE(NodeCodec::in_buffer(e));
    const std::uint32_t s = NodeCodec::slot(e);
    EXPECT_EQ(ds.slot_owner(s), n);
    EXPECT_TRUE(ds.slot_border_valid(s));
    std::vector<std::byte> ref(t->layout().brick_bytes());
    ASSERT_TRUE(t->copy_brick(n, ref));
    EXPECT_EQ(std::memcmp(ref.data(), ds.slot_data(s), ref.size()), 0);
  }
}

TEST(ProcessFlags, NoRequestsGiveEmptyPlan) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 4));
  ds.mark_used(3);
  const UploadPlan p = ds.process_flags(Strategy::FullFrame);
  EXPECT_TRUE(p.items.empty());
  EXPECT_TRUE(p.deferred.empty());
  EXPECT_EQ(ds.flags(3), 0);
}

TEST(ProcessFlags, CoarseRequestEvictsUsedFineBrick) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});  // levels 0..2; nodes 1..8 at level 1, 9..72 at level 0
  DeviceState ds(*t, slots(*t, 3));
  make_resident(ds, {9, 10, 11});
  ds.mark_used(9);
  ds.mark_requested(2);   // level 1
  ds.mark_requested(20);  // level 0
  ds.mark_requested(21);  // level 0
  const UploadPlan p = ds.process_flags(Strategy::FullFrame);
  ASSERT_EQ(p.items.size(), 3u);
  EXPECT_TRUE(p.deferred.empty());
  EXPECT_EQ(p.items[0].node, 2u);
  EXPECT_EQ(p.items[0].evicts, 9u);
  std::set<std::uint64_t> replaced{p.items[1].evicts, p.items[2].evicts};
  EXPECT_EQ(replaced, (std::set<std::uint64_t>{10, 11}));
  ds.upload(p);
  EXPECT_TRUE(ds.consistent());
  EXPECT_TRUE(NodeCodec::in_buffer(ds.entry(2)));
  EXPECT_FALSE(NodeCodec::in_buffer(ds.entry(9)));
}

TEST(ProcessFlags, FinerRequestsAreDeferredWhenResidentsAreCoarser) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 3));
  make_resident(ds, {0, 1, 2});
  for (std::uint64_t n : {0, 1, 2}) ds.mark_used(n);
  for (std::uint64_t n : {9, 10, 11, 17}) ds.mark_requested(n);
  const UploadPlan p = ds.process_flags(Strategy::FullFrame);
  EXPECT_TRUE(p.items.empty());
  EXPECT_EQ(p.deferred.size(), 4u);
  ds.upload(p);
  for (std::uint64_t n : {0, 1, 2}) EXPECT_TRUE(NodeCodec::in_buffer(ds.entry(n)));
}

TEST(ProcessFlags, RefinementMayReplaceEverySlot) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 2));
  make_resident(ds, {0, 1});
  ds.mark_used(0);
  ds.mark_used(1);
  ds.mark_requested(30);
  ds.mark_requested(31);
  const UploadPlan p = ds.process_flags(Strategy::Refinement);
  ASSERT_EQ(p.items.size(), 2u);
  ds.upload(p);
  EXPECT_TRUE(NodeCodec::in_buffer(ds.entry(30)));
  EXPECT_TRUE(NodeCodec::in_buffer(ds.entry(31)));
  EXPECT_FALSE(NodeCodec::in_buffer(ds.entry(0)));
}

TEST(ProcessFlags, PriorityIsLevelThenAgeThenIndex) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 8));
  ds.mark_requested(40);
  ds.process_flags(Strategy::FullFrame);  // not uploaded: 40 ages
  for (std::uint64_t n : {12, 40, 5, 0}) ds.mark_requested(n);
  const UploadPlan p = ds.process_flags(Strategy::FullFrame);
  ASSERT_EQ(p.items.size(), 4u);
  EXPECT_EQ(p.items[0].node, 0u);
  EXPECT_EQ(p.items[1].node, 5u);
  EXPECT_EQ(p.items[2].node, 40u);
  EXPECT_EQ(p.items[2].age, 1u);
  EXPECT_EQ(p.items[3].node, 12u);
}

TEST(ProcessFlagsProperty, FullFrameNeverEvictsForFinerOrEqualRequests) {
  TempDir dir;
  auto t = full_tree(dir, {32, 32, 32}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 12));
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::uint64_t> node(0, ds.node_count() - 1);
  for (int round = 0; round < 200; ++round) {
    for (int k = 0; k < 8; ++k) ds.mark_requested(node(rng));
    for (std::uint32_t s = 0; s < ds.slot_count(); ++s)
      if (ds.slot_owner(s) != kNoOwner && rng() % 2) ds.mark_used(ds.slot_owner(s));
    std::vector<bool> used(ds.slot_count());
    for (std::uint32_t s = 0; s < ds.slot_count(); ++s)
      used[s] = ds.slot_owner(s) != kNoOwner && (ds.flags(ds.slot_owner(s)) & kFlagUsed);
    const UploadPlan p = ds.process_flags(Strategy::FullFrame);
    for (const UploadItem& it : p.items) {
      if (it.evicts == kNoOwner || !used[it.slot]) continue;
      ASSERT_LT(ds.layout().level_of_index(it.evicts), it.level);
    }
    FakeClock clock;
    ds.upload(p, clock, [&](std::uint64_t n, std::span<std::byte> d, bool& bv) { return ds.fetch_from_tree(n, d, bv); });
    ASSERT_TRUE(ds.consistent());
  }
}

TEST(Upload, ZeroBudgetDefersEverything) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 4, 0.0));
  for (std::uint64_t n : {1, 2, 3}) ds.mark_requested(n);
  const UploadPlan p = ds.process_flags(Strategy::FullFrame);
  const UploadReport r = ds.upload(p);
  EXPECT_EQ(r.uploaded, 0u);
  EXPECT_EQ(r.deferred, 3u);
  // Deferred requests come back in the next plan without being requested again.
  ds.set_upload_budget(1000);
  EXPECT_EQ(ds.process_flags(Strategy::FullFrame).items.size(), 3u);
}

TEST(Upload, StubbedItemsRespectBudget) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  for (double budget : {50.0, 150.0, 200.0}) {
    DeviceState ds(*t, slots(*t, 8, budget));
    for (std::uint64_t n = 1; n <= 5; ++n) ds.mark_requested(n);
    const UploadPlan p = ds.process_flags(Strategy::FullFrame);
    ASSERT_EQ(p.items.size(), 5u);
    FakeClock clock;
    clock.t = 1000.0;
    const UploadReport r = ds.upload(p, clock, [&](std::uint64_t n, std::span<std::byte> d, bool& bv) {
      clock.t += 40.0;
      return ds.fetch_from_tree(n, d, bv);
    });
    EXPECT_LE(r.elapsed_ms, budget + 40.0) << budget;
    EXPECT_EQ(r.uploaded, std::min<std::size_t>(5, std::size_t(std::ceil(budget / 40.0)))) << budget;
    if (budget == 150.0) {
      EXPECT_GE(r.uploaded, 3u);
      EXPECT_LE(r.uploaded, 4u);
    }
    EXPECT_TRUE(ds.consistent());
  }
}

TEST(Upload, UnavailableItemsStayRequested) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 4));
  ds.mark_requested(4);
  FakeClock clock;
  const UploadReport r =
      ds.upload(ds.process_flags(Strategy::Refinement), clock,
                [](std::uint64_t, std::span<std::byte>, bool&) { return FetchResult::Unavailable; });
  EXPECT_EQ(r.unavailable, 1u);
  EXPECT_EQ(ds.occupied_slots(), 0u);
  const UploadPlan again = ds.process_flags(Strategy::Refinement);
  ASSERT_EQ(again.items.size(), 1u);
  EXPECT_EQ(again.items[0].node, 4u);
}

TEST(Upload, HomogeneousNodesAreNeverPlanned) {
  TempDir dir;
  core::VolumeDescriptor d;
  d.dims = {16, 16, 16};
  core::BrickPoolConfig cfg;
  cfg.brick_dims = {4, 4, 4};
  cfg.homogeneity_threshold = 10;
  auto t = core::Octree::create(d, cfg, dir / "w.vxbp");
  t->insert_block(0, {0, 0, 0}, {16, 16, 16}, std::vector<std::uint16_t>(4096, 500));
  DeviceState ds(*t, slots(*t, 4));
  ds.mark_requested(0);
  EXPECT_TRUE(ds.process_flags(Strategy::FullFrame).items.empty());
  EXPECT_EQ(ds.codec().avg(ds.entry(0), 0), 500);
}

TEST(DeviceState, DumpWritesPackedEntries) {
  TempDir dir;
  auto t = full_tree(dir, {16, 16, 16}, {4, 4, 4});
  DeviceState ds(*t, slots(*t, 2));
  ds.dump_node_buffer(dir / "nodes.bin");
  const auto bytes = voxstream::testing::read_bytes(dir / "nodes.bin");
  ASSERT_EQ(bytes.size(), ds.node_count() * 8);
  std::uint64_t e0;
  std::memcpy(&e0, bytes.data(), 8);
  EXPECT_EQ(e0, ds.entry(0));
}
