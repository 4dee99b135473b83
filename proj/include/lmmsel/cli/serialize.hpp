#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "lmmsel/ecm.hpp"
#include "lmmsel/simgen.hpp"
#include "lmmsel/tuning.hpp"

namespace lmmsel::cli {

using nlohmann::json;

inline constexpr const char* kFitSchema = "lmmsel.fit/1";
inline constexpr const char* kStudySchema = "lmmsel.study/1";
inline constexpr const char* kTruthSchema = "lmmsel.truth/1";
inline constexpr const char* kManifestSchema = "lmmsel.manifest/1";

/// Parameter block of a fit: beta by column name, variances by effect name,
/// support and deletions (1-based column / effect numbers), trajectory.
json fit_block(const MixedModelData& data, const FitResult& fit);

/// Restores the parameter state stored by fit_block against `data`.
ParameterState state_from_block(const MixedModelData& data, const json& block);

json bic_value(const BicValue& v);
json study_json(const StudyResult& result);
json truth_json(const GroundTruth& truth);

/// 1-based support from a truth file.
IndexSet support_from_truth(const json& truth);

json read_json(const std::string& path);
void write_json(const std::string& path, const json& doc);

}  // namespace lmmsel::cli
