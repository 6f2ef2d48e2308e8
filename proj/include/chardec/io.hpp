#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "chardec/stimulus.hpp"
#include "chardec/tensor.hpp"
#include "chardec/volume.hpp"

namespace chardec {

// All binary containers are little-endian with a 4-byte magic and a u16
// format version; a version mismatch is a hard error. Writers go through a
// temp file renamed into place, so readers never observe partial files.

// volume series: "BVOL", dims, TR in ms, f32 payload ordered [T][Z][Y][X]
// (x fastest on disk, z fastest in memory)
void write_bvol(const std::string& path, const VolumeSeries& v);
VolumeSeries read_bvol(const std::string& path);

// atlas labels: "ATLS", dims, region count, i32 payload in the same order
void write_atlas(const std::string& path, const AtlasVolume& a);
AtlasVolume read_atlas(const std::string& path);

// embeddings: "EMBT", V, D, f32 rows
void write_embeddings(const std::string& path, const EmbeddingTable& t);
EmbeddingTable read_embeddings(const std::string& path);

// named f64 tensors: "CKPT", count, then name, dtype, rank, dims, payload
void write_checkpoint(const std::string& path,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::map<std::string, Tensor> read_checkpoint(const std::string& path);

// one "<char><TAB><id>" line per vocab entry, ids 0..V-1 in order
void write_vocab(const std::string& path, const std::vector<std::string>& chars);
std::vector<std::string> read_vocab(const std::string& path);

// one "<char_id><TAB><onset_s><TAB><offset_s>" line per entry
void write_transcript(const std::string& path, const Transcript& t);
Transcript read_transcript(const std::string& path);

// FNV-1a 64 over the raw file bytes, as fixed-width hex
std::string file_digest(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_atomic(const std::string& path, const void* data, std::size_t len);

}  // namespace chardec
