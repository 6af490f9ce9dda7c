#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "blocktower/common/error.hpp"
#include "blocktower/dataset.hpp"
#include "blocktower/render.hpp"
#include "blocktower/scene_gen.hpp"
#include "test_util.hpp"

using namespace blocktower;
using namespace blocktower::dataset;
namespace fs = std::filesystem;

namespace {

scenegen::GenConfig small_config(int count) {
  scenegen::GenConfig cfg;
  cfg.count_per_cell = count;
  cfg.master_seed = 31;
  return cfg;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = render::read_file(e.path().string());
  return out;
}

// Shared 24-record dataset (count 4 per cell; all train).
class DatasetFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new bt_test::TempDir("bt-ds");
    cfg_ = small_config(4);
    samples_ = new std::vector<scenegen::SceneSample>(scenegen::generate_balanced(cfg_));
    manifest_ = new Manifest(write_dataset(*samples_, cfg_, dir_->str(), 2));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete samples_;
    delete dir_;
  }
  static bt_test::TempDir* dir_;
  static scenegen::GenConfig cfg_;
  static std::vector<scenegen::SceneSample>* samples_;
  static Manifest* manifest_;
};

bt_test::TempDir* DatasetFixture::dir_ = nullptr;
scenegen::GenConfig DatasetFixture::cfg_;
std::vector<scenegen::SceneSample>* DatasetFixture::samples_ = nullptr;
Manifest* DatasetFixture::manifest_ = nullptr;

}  // namespace

TEST_F(DatasetFixture, LayoutOnDisk) {
  ASSERT_EQ(manifest_->records.size(), 24u);
  std::ifstream in(*dir_ / "manifest.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 24);
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(dir_->path())) {
    if (!e.is_directory()) continue;
    ++dirs;
    int files = 0;
    for (const auto& f : fs::directory_iterator(e.path())) files += f.is_regular_file();
    EXPECT_EQ(files, 7);
    for (const char* name : {"img0.ppm", "img4.ppm", "mask0.pgm", "mask1.pgm", "mask2.pgm", "mask4.pgm", "traj.csv"})
      EXPECT_TRUE(fs::exists(e.path() / name)) << name;
  }
  EXPECT_EQ(dirs, 24);
  EXPECT_TRUE(fs::exists(*dir_ / "dataset.json"));
}

TEST_F(DatasetFixture, ManifestKeyOrderIsFixed) {
  std::ifstream in(*dir_ / "manifest.jsonl");
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::ordered_json::parse(line);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(j.dump(), record_to_json(manifest_->records.front()).dump());
  EXPECT_EQ(keys.front(), "id");
}

TEST_F(DatasetFixture, StableRecordsKeepTheirMask) {
  int stable = 0;
  for (const auto& r : manifest_->records) {
    if (r.fell) continue;
    ++stable;
    EXPECT_EQ(render::read_file(*dir_ / r.mask_paths[0]), render::read_file(*dir_ / r.mask_paths[3])) << r.id;
  }
  EXPECT_EQ(stable, 12);
}

TEST_F(DatasetFixture, LoadRoundTripsPixels) {
  const auto loaded = load_dataset(dir_->str(), SplitFilter::kAll);
  ASSERT_EQ(loaded.size(), 24u);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& lr = loaded[i];
    EXPECT_EQ(lr.record.id, manifest_->records[i].id);
    const auto img = render::read_ppm(*dir_ / lr.record.image_path);
    const std::size_t px = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t p = 0; p < px; ++p)
      for (int c = 0; c < 3; ++c) ASSERT_EQ(std::lround(lr.image[c * px + p] * 255.0f), img.data[p * 3 + c]);
    for (int k = 0; k < 4; ++k)
      EXPECT_EQ(lr.masks[k], render::read_pgm(*dir_ / lr.record.mask_paths[k]).data);
  }
  EXPECT_TRUE(load_dataset(dir_->str(), SplitFilter::kTest).empty());
  EXPECT_EQ(load_dataset(dir_->str(), SplitFilter::kTrain).size(), 24u);
}

TEST_F(DatasetFixture, ManifestRoundTrip) {
  const auto m = read_manifest(dir_->str());
  ASSERT_EQ(m.records.size(), manifest_->records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i)
    EXPECT_EQ(record_to_json(m.records[i]).dump(), record_to_json(manifest_->records[i]).dump());
  EXPECT_EQ(m.format_version, kFormatVersion);
}

TEST_F(DatasetFixture, VerifyPasses) {
  const auto rep = verify_dataset(dir_->str(), 2);
  EXPECT_TRUE(rep.ok()) << (rep.problems.empty() ? "" : rep.problems.front());
  EXPECT_EQ(rep.records_checked, 24u);
}

TEST(Dataset, WritesAreByteIdentical) {
  const auto cfg = small_config(3);
  const auto samples = scenegen::generate_balanced(cfg);
  bt_test::TempDir a("bt-a"), b("bt-b");
  write_dataset(samples, cfg, a.str(), 1);
  write_dataset(samples, cfg, b.str(), 3);
  EXPECT_EQ(tree(a.path()), tree(b.path()));
}

TEST(Dataset, LoadErrorsNameThePath) {
  const auto cfg = small_config(1);
  const auto samples = scenegen::generate_balanced(cfg);
  bt_test::TempDir d("bt-bad");
  const auto m = write_dataset(samples, cfg, d.str());
  const std::string img = d / m.records[0].image_path;
  const std::string bytes = render::read_file(img);
  render::write_file(img, bytes.substr(0, bytes.size() / 2));
  try {
    load_dataset(d.str(), SplitFilter::kAll);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptFile);
    EXPECT_NE(std::string(e.what()).find(m.records[0].image_path), std::string::npos);
  }
  EXPECT_FALSE(verify_dataset(d.str()).ok());
  render::write_file(img, bytes);
  EXPECT_TRUE(verify_dataset(d.str()).ok());

  fs::remove(d / m.records[1].mask_paths[2]);
  EXPECT_ERROR_CODE(load_dataset(d.str(), SplitFilter::kAll), kMissingFile);
  EXPECT_FALSE(verify_dataset(d.str()).ok());

  bt_test::TempDir empty("bt-empty");
  EXPECT_ERROR_CODE(read_manifest(empty.str()), kMissingFile);
}

TEST(Dataset, VerifyCatchesLabelAndMaskProblems) {
  const auto cfg = small_config(1);
  const auto samples = scenegen::generate_balanced(cfg);
  bt_test::TempDir d("bt-label");
  auto m = write_dataset(samples, cfg, d.str());
  // Flip a label in the manifest.
  std::ostringstream lines;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    auto r = m.records[i];
    if (i == 0) r.fell = !r.fell;
    lines << record_to_json(r).dump() << "\n";
  }
  const std::string original = render::read_file(d / "manifest.jsonl");
  render::write_file(d / "manifest.jsonl", lines.str());
  EXPECT_FALSE(verify_dataset(d.str()).ok());
  render::write_file(d / "manifest.jsonl", original);

  std::string mask = render::read_file(d / m.records[2].mask_paths[0]);
  mask.back() = 7;
  render::write_file(d / m.records[2].mask_paths[0], mask);
  EXPECT_FALSE(verify_dataset(d.str()).ok());
}

TEST(Dataset, ImportedRecordHasNoMasks) {
  const auto cfg = small_config(1);
  const auto samples = scenegen::generate_balanced(cfg);
  bt_test::TempDir d("bt-import");
  write_dataset(samples, cfg, d.str());
  render::Image img(56, 56);
  for (auto& v : img.data) v = 77;
  const auto r = import_image(d.str(), "real-0001", img, 3, true, Split::kTest);
  EXPECT_FALSE(r.has_masks());
  EXPECT_TRUE(std::isnan(r.margin));
  EXPECT_ERROR_CODE(import_image(d.str(), "real-0001", img, 3, true, Split::kTest), kInvalidArgument);
  const auto test = load_dataset(d.str(), SplitFilter::kTest);
  ASSERT_EQ(test.size(), 1u);
  EXPECT_EQ(test[0].record.id, "real-0001");
  EXPECT_TRUE(test[0].masks[0].empty());
  EXPECT_NEAR(test[0].image[0], 77.0f / 255.0f, 1e-7);
  EXPECT_TRUE(verify_dataset(d.str()).ok());
}

TEST(Dataset, SplitFilterParsing) {
  EXPECT_EQ(parse_split_filter("train"), SplitFilter::kTrain);
  EXPECT_EQ(parse_split_filter("test"), SplitFilter::kTest);
  EXPECT_EQ(parse_split_filter("all"), SplitFilter::kAll);
  EXPECT_ERROR_CODE(parse_split_filter("dev"), kInvalidArgument);
}
