#pragma once

#include "multiscreen/data.hpp"
#include "multiscreen/group_select.hpp"
#include "multiscreen/multi_pc.hpp"
#include "multiscreen/screening.hpp"
#include "multiscreen/simulate.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace multiscreen {

inline constexpr const char* kVersion = "1.0.0";

/// One entry of a study manifest.
struct ManifestEntry {
    std::string study_id;
    std::filesystem::path data_path;   ///< resolved against the manifest directory
    std::string response_column;
};

struct StudyManifest {
    std::vector<ManifestEntry> entries;
    std::optional<std::vector<std::string>> feature_columns;
};

/// Manifest layout:
///
///   { "studies": [ { "study_id": "...", "data_path": "a.csv",
///                    "response_column": "y" }, ... ],
///     "feature_columns": [ "g1", "g2" ] }        // optional
StudyManifest read_manifest(const std::filesystem::path& manifest_path);

struct LoadedMultiStudy {
    MultiStudy data;
    std::vector<std::string> warnings;
};

/// Loads every study of a manifest. Without an explicit feature list the
/// feature set is the intersection of all studies' columns, in the order of
/// the first study, and a warning lists what was dropped. Rows are 1-based
/// data rows (the header is not counted) in error messages.
LoadedMultiStudy load_multistudy(const std::filesystem::path& manifest_path);

/// Header plus numeric rows; throws InputError with row/column on bad cells.
struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;
};
CsvTable read_numeric_csv(const std::filesystem::path& path);

/// Statistics fixture: first column is a feature label, remaining columns
/// are one statistic per study.
struct StatsTable {
    std::vector<std::string> features;
    std::vector<std::string> studies;
    Eigen::MatrixXd t;
};
StatsTable read_stats_csv(const std::filesystem::path& path);

/// Writes one CSV per study plus manifest.json into `dir`; values use the
/// shortest round-trip representation so reloading reproduces them exactly.
std::filesystem::path write_multistudy(const MultiStudy& data, const std::filesystem::path& dir,
                                       const std::string& response_column = "y");

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// Small CSV builder with RFC 4180 quoting.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    CsvWriter& row(const std::vector<std::string>& cells);
    std::string str() const { return out_; }

private:
    std::size_t columns_;
    std::string out_;
};

nlohmann::json to_json(const ScreeningConfig& cfg);
nlohmann::json to_json(const FeatureScreenRecord& rec, const std::vector<std::string>& names);
nlohmann::json to_json(const ScreeningResult& res, const std::vector<std::string>& names);
nlohmann::json to_json(const MultiPcState& state, const std::vector<std::string>& names);
nlohmann::json to_json(const ReplicationSummary& s);
nlohmann::json to_json(const SimSetting& s);
nlohmann::json to_json(const LambdaSelection& sel);
nlohmann::json to_json(const std::vector<OlsStudyFit>& fits, const IndexList& selected,
                       const std::vector<std::string>& names);

std::string records_csv(const ScreeningResult& res, const std::vector<std::string>& names);

}  // namespace multiscreen
