#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"

using namespace sage;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sage_artifact_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ErrorKind load_error(const fs::path& dir) {
  try {
    load_artifact(dir);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::invalid_argument;
}

}  // namespace

TEST(Artifact, RoundTripPreservesTheModel) {
  const auto engine = Engine::fit(fixture::load("census_mini"));
  const auto dir = scratch("roundtrip");
  save_artifact(engine, dir);
  const auto back = load_artifact(dir);
  EXPECT_TRUE(back.train() == engine.train());
  EXPECT_TRUE(back.layout() == engine.layout());
  EXPECT_TRUE(back.graph() == engine.graph());
  EXPECT_TRUE(back.builtin() == engine.builtin());
  SamplerConfig cfg;
  cfg.seed = 3;
  EXPECT_TRUE(to_table(engine.schema(), synthesize(engine, 50, cfg)) ==
              to_table(back.schema(), synthesize(back, 50, cfg)));
  fs::remove_all(dir);
}

TEST(Artifact, ManifestListsEveryFileHash) {
  const auto engine = Engine::fit(fixture::load("iris"));
  const auto dir = scratch("manifest");
  save_artifact(engine, dir, "2026-01-01T00:00:00Z");
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["format"], "sage-model");
  EXPECT_EQ(manifest["version"], 1);
  EXPECT_EQ(manifest["created"], "2026-01-01T00:00:00Z");
  for (const auto& [file, hash] : manifest["files"].items()) {
    EXPECT_EQ(sha256_hex(read_file(dir / file)), hash.get<std::string>()) << file;
  }
  EXPECT_EQ(manifest["files"].size(), 6u);
  fs::remove_all(dir);
}

TEST(Artifact, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Artifact, TamperingIsDetected) {
  const auto engine = Engine::fit(fixture::load("iris"));
  const auto dir = scratch("tamper");

  save_artifact(engine, dir);
  write_file(dir / "backend.json", read_file(dir / "backend.json") + " ");
  EXPECT_EQ(load_error(dir), ErrorKind::integrity);

  save_artifact(engine, dir);
  auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  manifest["files"]["bins.json"] = std::string(64, '0');
  write_file(dir / "manifest.json", manifest.dump());
  EXPECT_EQ(load_error(dir), ErrorKind::integrity);

  save_artifact(engine, dir);
  write_file(dir / "manifest.json", "{ not json");
  EXPECT_EQ(load_error(dir), ErrorKind::integrity);

  save_artifact(engine, dir);
  fs::remove(dir / "train.csv");
  EXPECT_EQ(load_error(dir), ErrorKind::integrity);

  save_artifact(engine, dir);
  manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  manifest["version"] = 2;
  write_file(dir / "manifest.json", manifest.dump());
  EXPECT_EQ(load_error(dir), ErrorKind::integrity);
  fs::remove_all(dir);
}

TEST(Artifact, RefitIsByteIdenticalApartFromTimestamp) {
  const auto data = fixture::load("wine");
  const auto a = scratch("refit_a"), b = scratch("refit_b");
  save_artifact(Engine::fit(data), a, "t");
  save_artifact(Engine::fit(data), b, "t");
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Artifact, OverwriteLeavesNoStagingDirectories) {
  const auto engine = Engine::fit(fixture::load("iris"));
  const auto dir = scratch("overwrite");
  save_artifact(engine, dir);
  save_artifact(engine, dir);
  for (const auto& entry : fs::directory_iterator(dir.parent_path())) {
    EXPECT_EQ(entry.path().filename().string().find(".sage_artifact_test_overwrite.tmp"), std::string::npos);
  }
  EXPECT_NO_THROW(load_artifact(dir));
  fs::remove_all(dir);
}
