#pragma once

// CSV and JSON encodings of every artifact. Column orders and JSON keys are
// listed in docs/formats.md; numbers use the shortest round-trip form.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pillarfss/exciton.hpp"
#include "pillarfss/solver.hpp"
#include "pillarfss/spectro.hpp"
#include "pillarfss/tuner.hpp"

namespace pillarfss {

struct RunConfig;

using Json = nlohmann::ordered_json;

/// Shortest representation that parses back to the same double; "nan",
/// "inf", "-inf" for non-finite values.
std::string format_double(double v);
/// Throws InputError unless the whole field is a number.
double parse_double(std::string_view field);

/// RFC-4180 quoting when the field holds a comma, quote or line break.
std::string csv_escape(std::string_view field);
/// Splits one record. Throws InputError on an unterminated quote.
std::vector<std::string> split_csv_record(std::string_view line);

/// Writes through a temporary file in the same directory, then renames.
void atomic_write(const std::filesystem::path& path, std::string_view content);
/// dir / "<stem>-<hash>.<ext>"
std::filesystem::path hashed_path(const std::filesystem::path& dir, std::string_view stem,
                                  std::string_view hash, std::string_view ext);

std::vector<std::string> sweep_csv_header(unsigned outputs);
std::string sweep_csv(const SweepResult& sweep);
/// Parses a sweep CSV back into records. The header decides which column
/// groups are present; *outputs receives them when non-null.
std::vector<SweepRecord> parse_sweep_csv(std::string_view text, unsigned* outputs = nullptr);
Json sweep_metadata(const SweepResult& sweep, const RunConfig& cfg);

std::string scan_csv(const PolarizationScan& scan);
/// Throws InputError with the row number on schema problems.
PolarizationScan parse_scan_csv(std::string_view text, std::string_view source = "scan");

Json to_json(const FitResult& fit);
FitResult fit_from_json(const Json& j);

Json to_json(const TuneResult& tune);
TuneResult tune_from_json(const Json& j);

Json bias_to_json(const BiasPoint& b);
BiasPoint bias_from_json(const Json& j);

/// Single-point record: bias, fields, currents, regime and exciton state.
Json solution_json(const FieldSolution& s, const ExcitonState& st, int region);

Json iso_pairs_json(const SweepResult& sweep, const std::vector<IsoFssPair>& pairs,
                    double target, double separation);

/// "index,x_um,y_um,region,phi_V" per node.
std::string field_csv(const Mesh& mesh, const Eigen::VectorXd& phi);

}  // namespace pillarfss
