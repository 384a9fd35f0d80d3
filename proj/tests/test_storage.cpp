#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "aide/storage.hpp"
#include "log_reader.hpp"
#include "support.hpp"

using namespace aide;
using aide::test::TempDir;

namespace {

StoreOptions on_disk(const TempDir& dir) {
  StoreOptions o;
  o.data_dir = dir.path();
  return o;
}

Json trace_payload(const std::string& id, TimestampMs start) {
  return Json{{"trace", Json{{"trace_id", id}, {"start_time", start}}}, {"submitted_hash", "h"}};
}

}  // namespace

TEST(Crc, MatchesIndependentBitwiseCrc) {
  for (std::string s : {"", "a", "123456789", "{\"k\":[1,2,3]}"}) {
    EXPECT_EQ(crc32_of(s), test::bitwise_crc32(s)) << s;
  }
  EXPECT_EQ(test::bitwise_crc32("123456789"), 0xCBF43926u);
}

TEST(Store, FirstRecordIsSeqOne) {
  TempDir dir;
  Store store(on_disk(dir));
  EXPECT_EQ(store.append("demo", RecordKind::trace, trace_payload("a", 1)), 1u);
}

TEST(Store, EmptyDirectoryRecoversEmpty) {
  TempDir dir;
  Store store(on_disk(dir));
  EXPECT_EQ(store.last_seq(), 0u);
  EXPECT_TRUE(store.projects().empty());
  EXPECT_TRUE(store.scan("demo").empty());
}

TEST(Store, HalfOpenEmptyRangeScansNothing) {
  Store store(StoreOptions{});
  store.append("demo", RecordKind::trace, trace_payload("a", 5));
  EXPECT_TRUE(store.scan("demo", TimeRange{5, 5}).empty());
  EXPECT_EQ(store.scan("demo", TimeRange{5, 6}).size(), 1u);
}

TEST(Store, ScanOfHundredIsSortedAgainstListOracle) {
  Store store(StoreOptions{});
  std::mt19937 rng(5);
  std::vector<std::pair<TimestampMs, SeqNo>> oracle;
  for (int i = 0; i < 100; ++i) {
    const TimestampMs t = rng() % 50;
    auto seq = store.append("demo", RecordKind::trace, trace_payload("t" + std::to_string(i), t));
    oracle.emplace_back(t, seq);
  }
  std::sort(oracle.begin(), oracle.end());
  auto recs = store.scan("demo", TimeRange{0, 1000}, RecordKind::trace);
  ASSERT_EQ(recs.size(), 100u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].time(), oracle[i].first);
    EXPECT_EQ(recs[i].seq, oracle[i].second);
  }
}

TEST(Store, ConcurrentAppendsGetDistinctConsecutiveSeqs) {
  Store store(StoreOptions{});
  constexpr int kThreads = 8, kEach = 250;
  std::vector<std::vector<SeqNo>> acks(kThreads);
  std::vector<std::thread> threads;
  for (int w = 0; w < kThreads; ++w) {
    threads.emplace_back([&, w] {
      for (int i = 0; i < kEach; ++i) {
        acks[w].push_back(store.append("p" + std::to_string(w % 3), RecordKind::trace,
                                       trace_payload(std::to_string(w) + "-" + std::to_string(i), i)));
      }
    });
  }
  for (auto& t : threads) t.join();
  std::set<SeqNo> all;
  std::size_t total = 0;
  for (const auto& a : acks) {
    total += a.size();
    all.insert(a.begin(), a.end());
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  }
  EXPECT_EQ(total, all.size());
  EXPECT_EQ(*all.begin(), 1u);
  EXPECT_EQ(*all.rbegin(), static_cast<SeqNo>(kThreads * kEach));
  EXPECT_EQ(store.records_after(0).size(), total);
}

TEST(Store, CommitListenerSeesSeqOrder) {
  Store store(StoreOptions{});
  std::vector<SeqNo> seen;
  store.set_commit_listener([&](const LogRecord& r) { seen.push_back(r.seq); });
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&, w] {
      for (int i = 0; i < 100; ++i) store.append("p", RecordKind::trace, trace_payload(std::to_string(w), i));
    });
  }
  for (auto& t : threads) t.join();
  ASSERT_EQ(seen.size(), 400u);
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], i + 1);
}

TEST(Store, FileFormatReadableByIndependentReader) {
  TempDir dir;
  {
    Store store(on_disk(dir));
    store.append("demo", RecordKind::trace, trace_payload("a", 1));
    store.append("demo", RecordKind::binding_change, Json{{"ts", 5}, {"op", "activate"}});
    store.append(kServerScope, RecordKind::prompt_version, Json{{"ts", 3}});
  }
  auto lines = test::read_log_file(dir.path() / "demo" / "log-1.ndj");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_TRUE(lines[0].crc_ok);
  EXPECT_EQ(lines[0].seq, 1u);
  EXPECT_EQ(lines[0].kind, "trace");
  EXPECT_EQ(lines[1].seq, 2u);
  EXPECT_EQ(lines[1].kind, "binding_change");
  auto server = test::read_log_file(dir.path() / "@server" / "log-1.ndj");
  ASSERT_EQ(server.size(), 1u);
  EXPECT_EQ(server[0].seq, 3u);
}

TEST(Store, CorruptTailTruncatedAndSeqContinuesFromLastValid) {
  TempDir dir;
  {
    Store store(on_disk(dir));
    for (int i = 0; i < 5; ++i) store.append("demo", RecordKind::trace, trace_payload("t" + std::to_string(i), i));
  }
  const auto file = dir.path() / "demo" / "log-1.ndj";
  // Flip a payload byte of the last record so its checksum fails.
  std::string content;
  {
    std::ifstream in(file, std::ios::binary);
    content.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto last_start = content.rfind('\n', content.size() - 2) + 1;
  const auto pos = content.find("\"t4\"", last_start);
  ASSERT_NE(pos, std::string::npos);
  content[pos + 2] = '9';
  {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << content;
  }
  auto independent = test::read_log_file(file);
  ASSERT_EQ(independent.size(), 5u);
  EXPECT_FALSE(independent[4].crc_ok);

  Store store(on_disk(dir));
  EXPECT_EQ(store.last_seq(), 4u);
  ASSERT_EQ(store.recovery_report().truncations.size(), 1u);
  EXPECT_EQ(store.recovery_report().truncations[0].offset, last_start);
  EXPECT_EQ(store.append("demo", RecordKind::trace, trace_payload("t5", 5)), 5u);
  auto after = test::read_log_file(file);
  ASSERT_EQ(after.size(), 5u);
  for (const auto& l : after) EXPECT_TRUE(l.crc_ok);
}

TEST(Store, TornPartialLineIsDropped) {
  TempDir dir;
  {
    Store store(on_disk(dir));
    store.append("demo", RecordKind::trace, trace_payload("a", 1));
  }
  {
    std::ofstream out(dir.path() / "demo" / "log-1.ndj", std::ios::app | std::ios::binary);
    out << "{\"seq\":2,\"kind\":\"trace\",\"crc\":1,\"payl";
  }
  Store store(on_disk(dir));
  EXPECT_EQ(store.last_seq(), 1u);
  EXPECT_EQ(store.append("demo", RecordKind::trace, trace_payload("b", 2)), 2u);
}

TEST(Store, StrictModeRaisesCorruptLogWithOffset) {
  TempDir dir;
  {
    Store store(on_disk(dir));
    store.append("demo", RecordKind::trace, trace_payload("a", 1));
  }
  std::uintmax_t size = std::filesystem::file_size(dir.path() / "demo" / "log-1.ndj");
  {
    std::ofstream out(dir.path() / "demo" / "log-1.ndj", std::ios::app);
    out << "garbage\n";
  }
  auto opts = on_disk(dir);
  opts.recovery = RecoveryMode::strict;
  try {
    Store store(opts);
    FAIL() << "expected CorruptLog";
  } catch (const CorruptLogError& e) {
    EXPECT_EQ(e.offset(), size);
  }
}

TEST(Store, RecoverAppendRecoverIsIdempotent) {
  TempDir dir;
  auto state_hash = [](const Store& s) {
    std::string acc;
    for (const auto& r : s.records_after(0)) {
      acc += std::to_string(r.seq) + std::string(to_string(r.kind)) + r.project + canonical(*r.payload) + "\n";
    }
    return fnv1a64(acc);
  };
  std::uint64_t h1 = 0;
  {
    Store store(on_disk(dir));
    for (int i = 0; i < 10; ++i) store.append("demo", RecordKind::trace, trace_payload(std::to_string(i), i));
  }
  {
    Store store(on_disk(dir));
    store.append("other", RecordKind::config_event, Json{{"ts", 1}});
    h1 = state_hash(store);
  }
  Store again(on_disk(dir));
  EXPECT_EQ(state_hash(again), h1);
  Store third(on_disk(dir));
  EXPECT_EQ(state_hash(third), h1);
}

TEST(Store, SnapshotRotatesAndRecoveryMatches) {
  TempDir dir;
  std::vector<std::string> before;
  {
    Store store(on_disk(dir));
    for (int i = 0; i < 20; ++i) store.append("demo", RecordKind::trace, trace_payload(std::to_string(i), i));
    store.snapshot();
    for (int i = 20; i < 25; ++i) store.append("demo", RecordKind::trace, trace_payload(std::to_string(i), i));
    for (const auto& r : store.records_after(0)) before.push_back(canonical(*r.payload));
  }
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "demo" / "log-2.ndj"));
  Store store(on_disk(dir));
  EXPECT_FALSE(store.recovery_report().snapshots_loaded.empty());
  std::vector<std::string> after;
  for (const auto& r : store.records_after(0)) after.push_back(canonical(*r.payload));
  EXPECT_EQ(after, before);
  EXPECT_EQ(store.append("demo", RecordKind::trace, trace_payload("x", 99)), 26u);
}

TEST(Store, BackgroundSnapshotterKeepsHistory) {
  TempDir dir;
  auto opts = on_disk(dir);
  opts.snapshot_every = 10;
  {
    Store store(opts);
    for (int i = 0; i < 35; ++i) store.append("demo", RecordKind::trace, trace_payload(std::to_string(i), i));
  }
  Store store(opts);
  EXPECT_EQ(store.records_after(0).size(), 35u);
  EXPECT_EQ(Store::read_directory(dir.path()).size(), 35u);
}

TEST(Store, QuotaRaisesStorageFull) {
  StoreOptions o;
  o.max_bytes = 300;
  Store store(o);
  EXPECT_THROW(
      {
        for (int i = 0; i < 100; ++i) store.append("demo", RecordKind::trace, trace_payload(std::to_string(i), i));
      },
      Error);
  try {
    store.append("demo", RecordKind::trace, trace_payload("x", 1));
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StorageFull);
  }
}

TEST(Store, ReadDirectoryIsSeqOrderedAcrossProjects) {
  TempDir dir;
  {
    Store store(on_disk(dir));
    store.append("b", RecordKind::trace, trace_payload("1", 9));
    store.append("a", RecordKind::trace, trace_payload("2", 1));
    store.append(kServerScope, RecordKind::prompt_version, Json{{"ts", 0}});
  }
  auto recs = Store::read_directory(dir.path());
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].project, "b");
  EXPECT_EQ(recs[1].project, "a");
  EXPECT_EQ(recs[2].project, kServerScope);
}
