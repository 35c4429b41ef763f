#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "naslab/data.hpp"

namespace naslab {

/// FNV-1a 64 over raw bytes; used for dataset and config fingerprints.
std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string fingerprint_hex(std::uint64_t h);

std::uint64_t file_fingerprint(const std::filesystem::path& p);

/// Flat binary dataset: magic "NLDS", u32 version, u32 d_in, u32 n_classes,
/// u64 n_samples, float64 inputs row-major, int32 labels. Little-endian.
void write_dataset(const std::filesystem::path& bin_path, const Dataset& ds,
                   int d_in, int n_classes);
Dataset read_dataset(const std::filesystem::path& bin_path, int* d_in_out = nullptr,
                     int* n_classes_out = nullptr);

nlohmann::ordered_json teacher_spec_json(const TeacherSpec& spec);
TeacherSpec teacher_spec_from_json(const nlohmann::json& j);

/// Sidecar: generating spec + seed + fingerprint of the binary file.
void write_dataset_sidecar(const std::filesystem::path& json_path,
                           const TeacherDataset& ds, std::uint64_t bin_fingerprint);

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& text);

}  // namespace naslab
