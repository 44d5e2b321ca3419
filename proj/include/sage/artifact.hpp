#pragma once

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>
#include <openssl/evp.h>

#include "sage/engine.hpp"

namespace sage {

inline constexpr int kArtifactVersion = 1;
inline constexpr const char* kArtifactFormat = "sage-model";

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::io, "sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

inline nlohmann::json engine_options_json(const EngineOptions& o) {
  return {
      {"binning", {{"rule", o.binning.rule == BinningOptions::Rule::fixed ? "fixed" : "freedman_diaconis"},
                   {"fixed_bins", o.binning.fixed_bins},
                   {"max_bins", o.binning.max_bins}}},
      {"mi", {{"feature_mi", o.mi.feature_mi == FeatureMiMode::bin_index ? "bin_index" : "max_over_bins"},
              {"tau_source", o.mi.tau_source == TauSource::feature_level ? "feature_level" : "pairwise"}}},
      {"builtin", {{"alpha", o.builtin.alpha},
                   {"context", o.builtin.context == BuiltinOptions::Context::conditional ? "conditional"
                                                                                         : "marginal_only"}}},
  };
}

inline EngineOptions engine_options_from_json(const nlohmann::json& j) {
  EngineOptions o;
  const auto& b = j.at("binning");
  o.binning.rule = b.at("rule").get<std::string>() == "fixed" ? BinningOptions::Rule::fixed
                                                               : BinningOptions::Rule::freedman_diaconis;
  o.binning.fixed_bins = b.at("fixed_bins").get<std::size_t>();
  o.binning.max_bins = b.at("max_bins").get<std::size_t>();
  const auto& m = j.at("mi");
  o.mi.feature_mi = m.at("feature_mi").get<std::string>() == "bin_index" ? FeatureMiMode::bin_index
                                                                          : FeatureMiMode::max_over_bins;
  o.mi.tau_source = m.at("tau_source").get<std::string>() == "feature_level" ? TauSource::feature_level
                                                                              : TauSource::pairwise;
  const auto& bi = j.at("builtin");
  o.builtin.alpha = bi.at("alpha").get<double>();
  o.builtin.context = bi.at("context").get<std::string>() == "conditional" ? BuiltinOptions::Context::conditional
                                                                            : BuiltinOptions::Context::marginal_only;
  return o;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

/// Writes a model directory: schema.json, bins.json, migraph.json,
/// backend.json, engine.json, train.csv and manifest.json (format, version,
/// creation time and a SHA-256 per file). Files are staged in a sibling
/// temporary directory and renamed into place.
inline void save_artifact(const Engine& engine, const std::filesystem::path& dir,
                          const std::string& created = utc_timestamp()) {
  namespace fs = std::filesystem;
  const auto target = fs::absolute(dir).lexically_normal();
  const auto parent = target.has_filename() ? target.parent_path() : target.parent_path().parent_path();
  const auto name = target.has_filename() ? target.filename().string() : target.parent_path().filename().string();
  fs::create_directories(parent);
  std::random_device rd;
  const auto staging = parent / ("." + name + ".tmp-" + std::to_string(rd()));
  fs::create_directories(staging);

  const std::vector<std::pair<std::string, std::string>> files = {
      {"schema.json", engine.schema().to_json().dump(2)},
      {"bins.json", engine.layout().to_json().dump(2)},
      {"migraph.json", engine.graph().to_json().dump()},
      {"backend.json", engine.builtin().to_json().dump()},
      {"engine.json", engine_options_json(engine.options()).dump(2)},
      {"train.csv", to_csv(engine.train())},
  };
  nlohmann::json manifest = {{"format", kArtifactFormat}, {"version", kArtifactVersion}, {"created", created}};
  try {
    for (const auto& [file, content] : files) {
      write_file(staging / file, content);
      manifest["files"][file] = sha256_hex(content);
    }
    write_file(staging / "manifest.json", manifest.dump(2));
    const auto final_dir = parent / name;
    if (fs::exists(final_dir)) fs::remove_all(final_dir);
    fs::rename(staging, final_dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

/// Loads and verifies a model directory. Version mismatches and files that
/// are missing or differ from their manifest hash raise IntegrityError.
inline Engine load_artifact(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::integrity, "manifest.json: " + std::string(e.what()));
  } catch (const Error& e) {
    throw Error(ErrorKind::integrity, e.what());
  }
  try {
    if (manifest.at("format").get<std::string>() != kArtifactFormat) {
      throw Error(ErrorKind::integrity, "not a model artifact");
    }
    if (manifest.at("version").get<int>() != kArtifactVersion) {
      throw Error(ErrorKind::integrity, "unsupported artifact version " + manifest.at("version").dump());
    }
    std::map<std::string, std::string> content;
    for (const char* file : {"schema.json", "bins.json", "migraph.json", "backend.json", "engine.json", "train.csv"}) {
      const auto expected = manifest.at("files").at(file).get<std::string>();
      std::string data;
      try {
        data = read_file(dir / file);
      } catch (const Error&) {
        throw Error(ErrorKind::integrity, std::string(file) + " is missing");
      }
      if (sha256_hex(data) != expected) throw Error(ErrorKind::integrity, std::string(file) + " hash mismatch");
      content[file] = std::move(data);
    }
    auto schema = FeatureSchema::from_json(nlohmann::json::parse(content["schema.json"]));
    auto train = parse_table(content["train.csv"], schema);
    auto layout = BinLayout::from_json(schema, nlohmann::json::parse(content["bins.json"]));
    auto graph = MIGraph::from_json(nlohmann::json::parse(content["migraph.json"]));
    if (graph.pseudo_count() != layout.pseudo_count() || graph.feature_count() != layout.feature_count()) {
      throw Error(ErrorKind::integrity, "migraph.json does not match bins.json");
    }
    auto builtin = BuiltinBackend::from_json(layout, nlohmann::json::parse(content["backend.json"]));
    auto options = engine_options_from_json(nlohmann::json::parse(content["engine.json"]));
    return Engine(std::move(train), std::move(layout), std::move(graph), std::move(builtin), options);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::integrity, e.what());
  }
}

}  // namespace sage
