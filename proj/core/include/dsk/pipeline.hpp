#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "dsk/config.hpp"
#include "dsk/dataset.hpp"

// Stages of the downscaling pipeline. Each stage reads its inputs from and
// writes its artifacts to `Context::out`; every artifact records the hash of
// the resolved configuration that produced it.
namespace dsk::pipeline {

namespace artifact {
inline constexpr const char* kHf = "hf.dsnp";            // high fidelity, full resolution
inline constexpr const char* kLf = "lf.dsnp";            // low fidelity, native LF grid
inline constexpr const char* kLfCoarse = "y.dsnp";       // low fidelity on the coarse grid
inline constexpr const char* kHfCoarse = "yprime.dsnp";  // high fidelity through the selection mask
inline constexpr const char* kTransport = "ot.dotm";
inline constexpr const char* kDenoiser = "denoiser.dkpt";
inline constexpr const char* kTrainLog = "train_loss.csv";
inline constexpr const char* kSamplesRaw = "samples_raw_cdfn.dsnp";
inline constexpr const char* kSamplesOt = "samples_ot_cdfn.dsnp";
inline constexpr const char* kConditionsRaw = "conditions_raw.dsnp";
inline constexpr const char* kConditionsOt = "conditions_ot.dsnp";
inline constexpr const char* kOtCoarse = "ot_lr.dsnp";
inline constexpr const char* kOtCubic = "samples_ot_cubic.dsnp";
inline constexpr const char* kBcsd = "samples_bcsd.dsnp";
inline constexpr const char* kQuantiles = "bcsd.dqtb";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportMd = "report.md";
}  // namespace artifact

struct Context {
  RunConfig cfg;
  std::filesystem::path out;
  unsigned threads = 1;
  bool force = false;
  std::string hash;  // config_hash(cfg)
};

class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Context make_context(RunConfig cfg, std::filesystem::path out, unsigned threads = 1);

// Throws MissingArtifact if `name` has not been produced in ctx.out.
std::filesystem::path require_artifact(const Context& ctx, const std::string& name);

void gen_data(const Context& ctx);
void fit_ot(const Context& ctx);
void train(const Context& ctx);
void sample(const Context& ctx);
void baseline(const Context& ctx);
void evaluate(const Context& ctx);
// Metrics between two arbitrary DSNP files, written as metrics_<method>.json.
void evaluate_files(const Context& ctx, const std::filesystem::path& pred, const std::filesystem::path& ref,
                    const std::string& method);
void report(const Context& ctx);

// Metrics of one method as a JSON object (text), as written by evaluate.
std::string metrics_json(const Context& ctx, const std::string& method, const SnapshotDataset& pred,
                         const SnapshotDataset& ref, const SnapshotDataset* conditions, std::size_t group_size,
                         const SnapshotDataset* lf_inputs);

}  // namespace dsk::pipeline
