// include/otlid/manifest.h

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

#ifndef OTLID_MANIFEST_H_
#define OTLID_MANIFEST_H_

#include <cstdint>
#include <map>
#include <string>

namespace otlid {

// Everything needed to re-run a command bit-identically: the command, its
// full effective configuration, seeds, input hashes, and the solver that was
// actually used.
struct RunManifest {
  std::string command;
  std::string config_json;  // serialized effective config object
  std::uint64_t seed = 0;
  std::map<std::string, std::string> dataset_hashes;  // path -> fnv1a64 hex
  std::string solver = "n/a";
  std::string version;
  double wall_seconds = 0.0;

  std::string ToJson() const;
};

// FNV-1a 64-bit hash of a file's bytes.
std::uint64_t HashFileFnv1a64(const std::string& path);
std::uint64_t HashBytesFnv1a64(const void* data, std::size_t size);
std::string HashHex(std::uint64_t hash);

// Writes to a temporary sibling file, then renames into place.
void WriteFileAtomic(const std::string& path, const std::string& contents);
void WriteManifestAtomic(const RunManifest& manifest, const std::string& path);

}  // namespace otlid

#endif  // OTLID_MANIFEST_H_
