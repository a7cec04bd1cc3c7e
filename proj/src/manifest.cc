// src/manifest.cc

// Copyright 2026  OTLID Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "otlid/manifest.h"

#include <cstdio>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "otlid/errors.h"
#include "otlid/version.h"

namespace otlid {

std::uint64_t HashBytesFnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t HashFileFnv1a64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open for hashing: " + path);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

std::string HashHex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

std::string RunManifest::ToJson() const {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config_json.empty()
                    ? nlohmann::json::object()
                    : nlohmann::json::parse(config_json);
  j["seed"] = seed;
  j["dataset_hashes"] = dataset_hashes;
  j["solver"] = solver;
  j["version"] = version.empty() ? kVersion : version;
  j["wall_seconds"] = wall_seconds;
  return j.dump(2);
}

void WriteFileAtomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + tmp);
    out << contents;
    if (!out.good()) throw InputError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw InputError("cannot rename " + tmp + " to " + path);
  }
}

void WriteManifestAtomic(const RunManifest& manifest,
                         const std::string& path) {
  WriteFileAtomic(path, manifest.ToJson() + "\n");
}

}  // namespace otlid
