#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

// DSNP snapshot container: "DSNP", version u32, n_snapshots u32, n_grid u32,
// f64 payload (snapshot-major), then a u32 length-prefixed JSON metadata blob.
namespace dsk {

inline constexpr std::uint32_t kDatasetVersion = 1;

struct SnapshotDataset {
  std::size_t n_grid = 0;
  std::vector<double> values;  // size() * n_grid, snapshot-major
  std::string metadata = "{}";  // JSON object

  SnapshotDataset() = default;
  SnapshotDataset(std::size_t grid, std::vector<double> v, std::string meta = "{}");

  std::size_t size() const { return n_grid ? values.size() / n_grid : 0; }
  std::span<const double> snapshot(std::size_t i) const {
    return std::span<const double>(values).subspan(i * n_grid, n_grid);
  }
  std::span<double> snapshot(std::size_t i) {
    return std::span<double>(values).subspan(i * n_grid, n_grid);
  }

  // Snapshots [begin, end) as a new dataset carrying the same metadata.
  SnapshotDataset slice(std::size_t begin, std::size_t end) const;
};

std::string encode_dataset(const SnapshotDataset& ds);
SnapshotDataset decode_dataset(std::string bytes, const std::string& what = "dataset");

void save_dataset(const std::filesystem::path& path, const SnapshotDataset& ds);
SnapshotDataset load_dataset(const std::filesystem::path& path);

}  // namespace dsk
