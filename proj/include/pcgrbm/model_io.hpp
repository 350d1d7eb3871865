#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "pcgrbm/grbm.hpp"
#include "pcgrbm/pcgrbm.hpp"

namespace pcgrbm {

/// Provenance recorded for models trained with constraints.
struct ConstraintProvenance {
    double lambda = 0.7;
    SignMode sign_mode = SignMode::paper_exact;
    double constraint_rate = 1.0;
    bool use_sampled_hidden = true;
    Index must_count = 0;
    Index cannot_count = 0;
    std::uint64_t fingerprint = 0;
};

struct ModelFile {
    GrbmParams params;
    TrainConfig train;
    std::optional<ConstraintProvenance> constraints;
};

/// Text format, one `key value` per header line followed by the parameter blocks.
/// See docs/model_format.md. Values are written with 17 significant digits and read back exactly.
void write_model(std::ostream& out, const ModelFile& model);
ModelFile read_model(std::istream& in);

void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace pcgrbm
