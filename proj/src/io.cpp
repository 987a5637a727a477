#include "multiscreen/io.hpp"

#include "multiscreen/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace multiscreen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string unquote(std::string s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

std::vector<std::string_view> lines_of(const std::string& text) {
    std::vector<std::string_view> out;
    std::string_view all(text);
    std::size_t start = 0;
    while (start < all.size()) {
        auto pos = all.find('\n', start);
        if (pos == std::string_view::npos) pos = all.size();
        auto line = all.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        start = pos + 1;
    }
    // trailing blank lines carry no rows
    while (!out.empty() && trim(out.back()).empty()) out.pop_back();
    return out;
}

double parse_cell(const std::string& cell, const fs::path& file, std::size_t row,
                  const std::string& column) {
    auto fail = [&](const std::string& why) {
        return InputError(file.filename().string() + ": " + why + " at row " + std::to_string(row) +
                          ", column " + column + ": '" + cell + "'");
    };
    if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null")
        throw fail("missing value");
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (*first == '+') ++first;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw fail("non-numeric value");
    if (!std::isfinite(v)) throw fail("non-finite value");
    return v;
}

void check_unique(const std::vector<std::string>& names, const fs::path& file) {
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (n.empty()) throw InputError(file.filename().string() + ": empty column name in header");
        if (!seen.insert(n).second)
            throw InputError(file.filename().string() + ": duplicate column name '" + n + "'");
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

CsvTable read_numeric_csv(const fs::path& path) {
    const std::string text = read_file(path);
    const auto lines = lines_of(text);
    if (lines.empty()) throw InputError(path.filename().string() + ": file is empty");
    CsvTable table;
    for (auto& h : split_line(lines.front())) table.header.push_back(unquote(h));
    check_unique(table.header, path);
    const auto cols = table.header.size();
    table.values.resize(static_cast<Index>(lines.size() - 1), static_cast<Index>(cols));
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_line(lines[r]);
        if (cells.size() != cols)
            throw InputError(path.filename().string() + ": row " + std::to_string(r) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(cols));
        for (std::size_t c = 0; c < cols; ++c)
            table.values(static_cast<Index>(r - 1), static_cast<Index>(c)) =
                parse_cell(cells[c], path, r, table.header[c]);
    }
    return table;
}

StatsTable read_stats_csv(const fs::path& path) {
    const std::string text = read_file(path);
    const auto lines = lines_of(text);
    if (lines.size() < 2) throw InputError(path.filename().string() + ": no statistics rows");
    StatsTable out;
    auto header = split_line(lines.front());
    if (header.size() < 2) throw InputError(path.filename().string() + ": need at least one study column");
    for (std::size_t c = 1; c < header.size(); ++c) out.studies.push_back(unquote(header[c]));
    check_unique(out.studies, path);
    out.t.resize(static_cast<Index>(lines.size() - 1), static_cast<Index>(out.studies.size()));
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_line(lines[r]);
        if (cells.size() != header.size())
            throw InputError(path.filename().string() + ": row " + std::to_string(r) +
                             " has the wrong number of cells");
        out.features.push_back(unquote(cells[0]));
        for (std::size_t c = 1; c < cells.size(); ++c)
            out.t(static_cast<Index>(r - 1), static_cast<Index>(c - 1)) =
                parse_cell(cells[c], path, r, out.studies[c - 1]);
    }
    check_unique(out.features, path);
    return out;
}

StudyManifest read_manifest(const fs::path& manifest_path) {
    json doc;
    try {
        doc = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw InputError("manifest '" + manifest_path.string() + "' is not valid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("studies") || !doc["studies"].is_array())
        throw InputError("manifest must be an object with a \"studies\" array");
    StudyManifest m;
    const fs::path base = manifest_path.parent_path();
    std::set<std::string> ids;
    for (const auto& s : doc["studies"]) {
        for (const char* key : {"study_id", "data_path", "response_column"})
            if (!s.contains(key) || !s[key].is_string())
                throw InputError(std::string("manifest study entry lacks string field \"") + key + "\"");
        ManifestEntry e;
        e.study_id = s["study_id"].get<std::string>();
        e.data_path = s["data_path"].get<std::string>();
        if (e.data_path.is_relative()) e.data_path = base / e.data_path;
        e.response_column = s["response_column"].get<std::string>();
        if (!ids.insert(e.study_id).second)
            throw InputError("manifest: duplicate study_id '" + e.study_id + "'");
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw InputError("manifest lists no studies");
    if (doc.contains("feature_columns")) {
        if (!doc["feature_columns"].is_array())
            throw InputError("manifest: \"feature_columns\" must be an array of strings");
        std::vector<std::string> cols;
        for (const auto& c : doc["feature_columns"]) {
            if (!c.is_string()) throw InputError("manifest: \"feature_columns\" must be strings");
            cols.push_back(c.get<std::string>());
        }
        m.feature_columns = std::move(cols);
    }
    return m;
}

LoadedMultiStudy load_multistudy(const fs::path& manifest_path) {
    const auto manifest = read_manifest(manifest_path);
    std::vector<CsvTable> tables;
    for (const auto& e : manifest.entries) {
        if (!fs::exists(e.data_path))
            throw InputError("study '" + e.study_id + "': data file '" + e.data_path.string() +
                             "' does not exist");
        tables.push_back(read_numeric_csv(e.data_path));
        const auto& h = tables.back().header;
        if (std::find(h.begin(), h.end(), e.response_column) == h.end())
            throw InputError("study '" + e.study_id + "': response column '" + e.response_column +
                             "' not found");
    }

    LoadedMultiStudy out;
    std::vector<std::string> features;
    if (manifest.feature_columns) {
        features = *manifest.feature_columns;
        std::set<std::string> seen;
        for (const auto& f : features)
            if (!seen.insert(f).second) throw InputError("manifest: duplicate feature column '" + f + "'");
        for (std::size_t k = 0; k < tables.size(); ++k) {
            const auto& h = tables[k].header;
            for (const auto& f : features) {
                if (f == manifest.entries[k].response_column)
                    throw InputError("feature column '" + f + "' is the response of study '" +
                                     manifest.entries[k].study_id + "'");
                if (std::find(h.begin(), h.end(), f) == h.end())
                    throw InputError("study '" + manifest.entries[k].study_id +
                                     "' lacks feature column '" + f + "'");
            }
        }
    } else {
        std::vector<std::set<std::string>> sets;
        for (std::size_t k = 0; k < tables.size(); ++k) {
            std::set<std::string> s(tables[k].header.begin(), tables[k].header.end());
            s.erase(manifest.entries[k].response_column);
            sets.push_back(std::move(s));
        }
        std::set<std::string> dropped;
        for (std::size_t k = 0; k < tables.size(); ++k)
            for (const auto& c : tables[k].header) {
                if (c == manifest.entries[k].response_column) continue;
                bool everywhere = true;
                for (const auto& s : sets) everywhere = everywhere && s.count(c);
                if (k == 0 && everywhere)
                    features.push_back(c);
                else if (!everywhere)
                    dropped.insert(c);
            }
        if (!dropped.empty()) {
            std::string msg = "dropped columns not shared by every study:";
            for (const auto& d : dropped) msg += " " + d;
            out.warnings.push_back(msg);
        }
    }
    if (features.empty()) throw InputError("no feature columns are shared by every study");

    for (std::size_t k = 0; k < tables.size(); ++k) {
        const auto& t = tables[k];
        std::map<std::string, Index> col;
        for (std::size_t c = 0; c < t.header.size(); ++c) col[t.header[c]] = static_cast<Index>(c);
        Study s;
        s.id = manifest.entries[k].study_id;
        s.y = t.values.col(col.at(manifest.entries[k].response_column));
        s.x.resize(t.values.rows(), static_cast<Index>(features.size()));
        for (std::size_t j = 0; j < features.size(); ++j)
            s.x.col(static_cast<Index>(j)) = t.values.col(col.at(features[j]));
        out.data.studies.push_back(std::move(s));
    }
    out.data.feature_names = features;
    out.data.validate();
    return out;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw InputError("failed writing '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

fs::path write_multistudy(const MultiStudy& data, const fs::path& dir,
                          const std::string& response_column) {
    data.validate();
    for (const auto& f : data.feature_names)
        if (f == response_column)
            throw InputError("response column name '" + response_column + "' clashes with a feature");
    json manifest;
    manifest["studies"] = json::array();
    for (const auto& s : data.studies) {
        std::vector<std::string> header = data.feature_names;
        header.push_back(response_column);
        CsvWriter csv(header);
        std::vector<std::string> cells(header.size());
        for (Index i = 0; i < s.n(); ++i) {
            for (Index j = 0; j < s.p(); ++j) cells[static_cast<std::size_t>(j)] = format_double(s.x(i, j));
            cells.back() = format_double(s.y(i));
            csv.row(cells);
        }
        const std::string file = s.id + ".csv";
        write_file_atomic(dir / file, csv.str());
        manifest["studies"].push_back(
            {{"study_id", s.id}, {"data_path", file}, {"response_column", response_column}});
    }
    const auto path = dir / "manifest.json";
    write_file_atomic(path, manifest.dump(2) + "\n");
    return path;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

CsvWriter& CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw InputError("CsvWriter: row width does not match header");
    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (c) out_ += ',';
        const auto& cell = cells[c];
        if (cell.find_first_of(",\"\n") != std::string::npos) {
            out_ += '"';
            for (char ch : cell) {
                if (ch == '"') out_ += '"';
                out_ += ch;
            }
            out_ += '"';
        } else {
            out_ += cell;
        }
    }
    out_ += '\n';
    return *this;
}

json to_json(const ScreeningConfig& cfg) {
    json j{{"alpha1", cfg.alpha1}, {"alpha2", cfg.alpha2}, {"step1_threshold", cfg.step1_threshold()}};
    j["explicit_threshold"] = cfg.z_threshold.has_value();
    return j;
}

json to_json(const FeatureScreenRecord& rec, const std::vector<std::string>& names) {
    json j;
    j["feature"] = rec.feature;
    j["name"] = names.at(static_cast<std::size_t>(rec.feature));
    j["t_stats"] = std::vector<double>(rec.t_stats.data(), rec.t_stats.data() + rec.t_stats.size());
    j["l_hat"] = rec.l_hat;
    j["kappa_hat"] = rec.kappa_hat;
    j["l_stat"] = rec.l_stat ? json(*rec.l_stat) : json(nullptr);
    j["chi2_threshold"] = rec.chi2_threshold ? json(*rec.chi2_threshold) : json(nullptr);
    j["kept"] = rec.kept;
    return j;
}

json to_json(const ScreeningResult& res, const std::vector<std::string>& names) {
    json j;
    j["kept"] = res.kept;
    j["dropped"] = res.dropped;
    json kept_names = json::array();
    for (Index k : res.kept) kept_names.push_back(names.at(static_cast<std::size_t>(k)));
    j["kept_names"] = kept_names;
    json recs = json::array();
    for (const auto& r : res.records) recs.push_back(to_json(r, names));
    j["records"] = recs;
    return j;
}

json to_json(const MultiPcState& state, const std::vector<std::string>& names) {
    json j;
    j["stage"] = state.stage;
    j["stopped_reason"] = to_string(state.stopped_reason);
    j["active_sets"] = state.active_sets;
    j["tests_per_stage"] = state.tests_per_stage;
    json final_names = json::array();
    for (Index k : state.active_sets.back()) final_names.push_back(names.at(static_cast<std::size_t>(k)));
    j["selected_names"] = final_names;
    json drops = json::array();
    for (const auto& d : state.drops)
        drops.push_back({{"feature", d.feature},
                         {"stage", d.stage},
                         {"conditioning_set", d.conditioning_set},
                         {"record", to_json(d.record, names)}});
    j["drops"] = drops;
    return j;
}

json to_json(const ReplicationSummary& s) {
    return json{{"replications", s.replications},
                {"succeeded", s.succeeded},
                {"failed", s.failed},
                {"first_failure", s.first_failure},
                {"mean_sensitivity", s.mean_sensitivity},
                {"se_sensitivity", s.se_sensitivity},
                {"mean_specificity", s.mean_specificity},
                {"se_specificity", s.se_specificity},
                {"mean_fp", s.mean_fp},
                {"mean_fn", s.mean_fn},
                {"mean_selected", s.mean_selected},
                {"coverage", s.coverage}};
}

json to_json(const SimSetting& s) {
    return json{{"setting", s.id},
                {"n", s.n},
                {"p", s.p},
                {"K", s.K},
                {"s0", s.s0},
                {"beta_low", s.beta_low},
                {"beta_high", s.beta_high},
                {"heterogeneous", s.heterogeneous},
                {"hetero_sd", s.hetero_sd},
                {"noise_sd", s.noise_sd},
                {"r_pool", s.r_pool},
                {"fix_r", s.fix_r},
                {"B", s.B},
                {"seed", s.seed}};
}

json to_json(const LambdaSelection& sel) {
    json path = json::array();
    for (const auto& d : sel.path)
        path.push_back({{"lambda", d.lambda},
                        {"score", d.score},
                        {"rss", d.rss},
                        {"nonzero_groups", d.nonzero_groups},
                        {"iterations", d.iterations},
                        {"converged", d.converged}});
    return json{{"method", sel.method == TuneMethod::bic ? "bic" : "cv"},
                {"lambda", sel.lambda},
                {"index", sel.index},
                {"path", path}};
}

json to_json(const std::vector<OlsStudyFit>& fits, const IndexList& selected,
             const std::vector<std::string>& names) {
    json out = json::array();
    for (const auto& f : fits) {
        json coefs = json::array();
        for (Index c = 0; c < f.coef.size(); ++c) {
            const std::string term =
                c == 0 ? "(intercept)" : names.at(static_cast<std::size_t>(selected[static_cast<std::size_t>(c - 1)]));
            coefs.push_back({{"term", term}, {"estimate", f.coef(c)}, {"se", f.se(c)}});
        }
        out.push_back({{"study_id", f.study_id},
                       {"n", f.n},
                       {"r2", f.r2},
                       {"adj_r2", f.adj_r2},
                       {"sigma2", f.sigma2},
                       {"coefficients", coefs}});
    }
    return out;
}

std::string records_csv(const ScreeningResult& res, const std::vector<std::string>& names) {
    const Index K = res.records.empty() ? 0 : res.records.front().t_stats.size();
    std::vector<std::string> header{"feature", "name"};
    for (Index k = 0; k < K; ++k) header.push_back("t" + std::to_string(k + 1));
    for (const char* h : {"l_hat", "kappa_hat", "l_stat", "chi2_threshold", "kept"}) header.push_back(h);
    CsvWriter csv(header);
    for (const auto& r : res.records) {
        std::vector<std::string> cells{std::to_string(r.feature), names.at(static_cast<std::size_t>(r.feature))};
        for (Index k = 0; k < K; ++k) cells.push_back(k < r.t_stats.size() ? format_double(r.t_stats(k)) : "");
        std::string l;
        for (std::size_t i = 0; i < r.l_hat.size(); ++i) l += (i ? ";" : "") + std::to_string(r.l_hat[i] + 1);
        cells.push_back(l);
        cells.push_back(std::to_string(r.kappa_hat));
        cells.push_back(r.l_stat ? format_double(*r.l_stat) : "");
        cells.push_back(r.chi2_threshold ? format_double(*r.chi2_threshold) : "");
        cells.push_back(r.kept ? "1" : "0");
        csv.row(cells);
    }
    return csv.str();
}

}  // namespace multiscreen
