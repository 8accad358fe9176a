#include "dsk/dataset.hpp"

#include <stdexcept>

#include "dsk/binary_io.hpp"

namespace dsk {

SnapshotDataset::SnapshotDataset(std::size_t grid, std::vector<double> v, std::string meta)
    : n_grid(grid), values(std::move(v)), metadata(std::move(meta)) {
  if (n_grid == 0 || values.size() % n_grid != 0) {
    throw std::invalid_argument("dataset: " + std::to_string(values.size()) +
                                " values do not form snapshots of length " + std::to_string(n_grid));
  }
}

SnapshotDataset SnapshotDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) {
    throw std::out_of_range("dataset slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") out of range for " + std::to_string(size()) + " snapshots");
  }
  return SnapshotDataset(n_grid,
                         std::vector<double>(values.begin() + static_cast<long>(begin * n_grid),
                                             values.begin() + static_cast<long>(end * n_grid)),
                         metadata);
}

std::string encode_dataset(const SnapshotDataset& ds) {
  io::Writer w;
  w.magic("DSNP");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.n_grid));
  w.f64s(ds.values);
  w.u32(static_cast<std::uint32_t>(ds.metadata.size()));
  w.bytes(ds.metadata);
  return w.buffer();
}

SnapshotDataset decode_dataset(std::string bytes, const std::string& what) {
  io::Reader r(std::move(bytes), what);
  r.expect_magic("DSNP");
  const auto version = r.u32();
  if (version != kDatasetVersion) {
    throw std::runtime_error(what + ": unsupported dataset version " + std::to_string(version));
  }
  const std::size_t n = r.u32();
  const std::size_t grid = r.u32();
  if (grid == 0) throw std::runtime_error(what + ": zero grid size");
  auto values = r.f64s(n * grid);
  std::string meta = r.bytes(r.u32());
  r.expect_end();
  return SnapshotDataset(grid, std::move(values), std::move(meta));
}

void save_dataset(const std::filesystem::path& path, const SnapshotDataset& ds) {
  io::write_file(path, encode_dataset(ds));
}

SnapshotDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path), path.string());
}

}  // namespace dsk
