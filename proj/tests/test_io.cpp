#include "multiscreen/error.hpp"
#include "multiscreen/io.hpp"
#include "multiscreen/simulate.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace multiscreen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("multiscreen_io_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void put(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string manifest2(const std::string& a, const std::string& b) {
    return R"({"studies": [{"study_id": "A", "data_path": ")" + a +
           R"(", "response_column": "y"}, {"study_id": "B", "data_path": ")" + b +
           R"(", "response_column": "y"}]})";
}

}  // namespace

TEST_CASE("two studies with shared columns") {
    TempDir d("shared");
    put(d.path / "a.csv", "g1,g2,g3,y\n1,2,3,4\n2,3,1,5\n3,1,2,6\n4,4,4,8\n");
    put(d.path / "b.csv", "y,g3,g1,g2\n1,0.5,2,3\n2,1.5,1,4\n3,2.5,0,1\n");
    put(d.path / "m.json", manifest2("a.csv", "b.csv"));
    const auto loaded = load_multistudy(d.path / "m.json");
    CHECK(loaded.data.K() == 2);
    CHECK(loaded.data.p() == 3);
    CHECK(loaded.warnings.empty());
    CHECK(loaded.data.feature_names == std::vector<std::string>{"g1", "g2", "g3"});
    CHECK(loaded.data.studies[0].n() == 4);
    CHECK(loaded.data.studies[1].n() == 3);
    // columns are aligned by name, not position
    CHECK(loaded.data.studies[1].x(0, 0) == 2.0);
    CHECK(loaded.data.studies[1].x(0, 2) == 0.5);
    CHECK(loaded.data.studies[1].y(2) == 3.0);
    CHECK(loaded.data.studies[0].id == "A");
}

TEST_CASE("feature intersection with a warning") {
    TempDir d("intersect");
    put(d.path / "a.csv", "a,b,c,y\n1,2,3,4\n2,3,1,5\n3,1,2,7\n");
    put(d.path / "b.csv", "b,c,d,y\n1,2,3,4\n2,1,1,5\n3,5,2,6\n");
    put(d.path / "m.json", manifest2("a.csv", "b.csv"));
    const auto loaded = load_multistudy(d.path / "m.json");
    CHECK(loaded.data.feature_names == std::vector<std::string>{"b", "c"});
    REQUIRE(loaded.warnings.size() == 1);
    CHECK(loaded.warnings[0].find(" a") != std::string::npos);
    CHECK(loaded.warnings[0].find(" d") != std::string::npos);
}

TEST_CASE("explicit feature columns") {
    TempDir d("explicit");
    put(d.path / "a.csv", "a,b,c,y\n1,2,3,4\n2,3,1,5\n3,1,2,7\n");
    put(d.path / "b.csv", "b,c,d,y\n1,2,3,4\n2,1,1,5\n3,5,2,6\n");
    put(d.path / "m.json", R"({"studies": [{"study_id": "A", "data_path": "a.csv", "response_column": "y"},
        {"study_id": "B", "data_path": "b.csv", "response_column": "y"}], "feature_columns": ["c", "b"]})");
    const auto loaded = load_multistudy(d.path / "m.json");
    CHECK(loaded.data.feature_names == std::vector<std::string>{"c", "b"});
    put(d.path / "m2.json", R"({"studies": [{"study_id": "A", "data_path": "a.csv", "response_column": "y"},
        {"study_id": "B", "data_path": "b.csv", "response_column": "y"}], "feature_columns": ["a"]})");
    CHECK_THROWS_WITH_AS(load_multistudy(d.path / "m2.json"), doctest::Contains("lacks feature column 'a'"),
                         InputError);
}

TEST_CASE("bad cells are reported with row and column") {
    TempDir d("badcell");
    std::string a = "g1,g2,y\n";
    for (int i = 1; i <= 8; ++i) a += std::to_string(i) + "," + (i == 7 ? "1.2.3" : "0.5") + ",1\n";
    put(d.path / "a.csv", a);
    put(d.path / "b.csv", "g1,g2,y\n1,2,3\n2,1,1\n3,3,2\n");
    put(d.path / "m.json", manifest2("a.csv", "b.csv"));
    CHECK_THROWS_WITH_AS(load_multistudy(d.path / "m.json"), doctest::Contains("row 7, column g2"), InputError);

    put(d.path / "a.csv", "g1,g2,y\n1,2,3\n2,NA,1\n3,3,2\n");
    CHECK_THROWS_WITH_AS(load_multistudy(d.path / "m.json"), doctest::Contains("missing value at row 2, column g2"),
                         InputError);
    put(d.path / "a.csv", "g1,g2,y\n1,2,3\n2,,1\n3,3,2\n");
    CHECK_THROWS_AS(load_multistudy(d.path / "m.json"), InputError);
    put(d.path / "a.csv", "g1,g2,y\n1,2,3\n2,inf,1\n3,3,2\n");
    CHECK_THROWS_AS(load_multistudy(d.path / "m.json"), InputError);
    put(d.path / "a.csv", "g1,g2,y\n1,2,3\n2,1\n3,3,2\n");
    CHECK_THROWS_WITH_AS(load_multistudy(d.path / "m.json"), doctest::Contains("row 2"), InputError);
}

TEST_CASE("structural input errors") {
    TempDir d("struct");
    put(d.path / "b.csv", "g1,g2,y\n1,2,3\n2,1,1\n3,3,2\n");
    put(d.path / "m.json", manifest2("missing.csv", "b.csv"));
    CHECK_THROWS_WITH_AS(load_multistudy(d.path / "m.json"), doctest::Contains("does not exist"), InputError);

    put(d.path / "dup.csv", "g1,g1,y\n1,2,3\n2,1,1\n3,3,2\n");
    put(d.path / "m.json", manifest2("dup.csv", "b.csv"));
    CHECK_THROWS_WITH_AS(load_multistudy(d.path / "m.json"), doctest::Contains("duplicate column"), InputError);

    put(d.path / "other.csv", "h1,h2,y\n1,2,3\n2,1,1\n3,3,2\n");
    put(d.path / "m.json", manifest2("other.csv", "b.csv"));
    CHECK_THROWS_WITH_AS(load_multistudy(d.path / "m.json"), doctest::Contains("no feature columns"), InputError);

    put(d.path / "m.json", R"({"studies": [{"study_id": "A", "data_path": "b.csv", "response_column": "z"}]})");
    CHECK_THROWS_WITH_AS(load_multistudy(d.path / "m.json"), doctest::Contains("response column 'z'"), InputError);

    put(d.path / "m.json", "{not json");
    CHECK_THROWS_AS(load_multistudy(d.path / "m.json"), InputError);
    put(d.path / "m.json", R"({"studies": []})");
    CHECK_THROWS_AS(load_multistudy(d.path / "m.json"), InputError);
    put(d.path / "m.json", manifest2("b.csv", "b.csv").replace(manifest2("b.csv", "b.csv").find("\"B\""), 3, "\"A\""));
    CHECK_THROWS_WITH_AS(load_multistudy(d.path / "m.json"), doctest::Contains("duplicate study_id"), InputError);
    CHECK_THROWS_AS(load_multistudy(d.path / "nope.json"), InputError);
}

TEST_CASE("simulator export round-trips exactly") {
    TempDir d("roundtrip");
    auto s = SimSetting::preset(3);
    s.p = 40;
    const auto inst = gen_instance(s, 2);
    const auto manifest = write_multistudy(inst.data, d.path);
    const auto back = load_multistudy(manifest);
    CHECK(back.warnings.empty());
    CHECK(back.data.feature_names == inst.data.feature_names);
    REQUIRE(back.data.K() == inst.data.K());
    for (std::size_t k = 0; k < inst.data.studies.size(); ++k) {
        CHECK(back.data.studies[k].id == inst.data.studies[k].id);
        CHECK(back.data.studies[k].x == inst.data.studies[k].x);
        CHECK(back.data.studies[k].y == inst.data.studies[k].y);
    }
    CHECK_FALSE(fs::exists(d.path / "manifest.json.tmp"));
}

TEST_CASE("shortest round-trip number formatting") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e308, 5e-324, 123456789.0, -0.0}) {
        const auto s = format_double(v);
        double back = 1.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == v);
        CHECK(std::signbit(back) == std::signbit(v));
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
}

TEST_CASE("atomic write replaces the file") {
    TempDir d("atomic");
    const auto p = d.path / "sub" / "out.txt";
    write_file_atomic(p, "first");
    CHECK(slurp(p) == "first");
    write_file_atomic(p, "second");
    CHECK(slurp(p) == "second");
    CHECK_FALSE(fs::exists(d.path / "sub" / "out.txt.tmp"));
}

TEST_CASE("CSV writer quoting") {
    CsvWriter w({"a", "b"});
    w.row({"x,y", "say \"hi\""});
    CHECK(w.str() == "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
    CHECK_THROWS_AS(w.row({"only"}), InputError);
}

TEST_CASE("statistics fixture") {
    const auto t = read_stats_csv(fs::path(MULTISCREEN_TEST_DATA) / "two_step_example.csv");
    CHECK(t.features == std::vector<std::string>{"S1", "S2", "N1"});
    CHECK(t.studies.size() == 5);
    CHECK(t.t.rows() == 3);
    CHECK(t.t.cols() == 5);
}

TEST_CASE("screening JSON carries every record") {
    const auto data = testing::random_multistudy(3, 3, 40, 6);
    const auto res = tsa_sis(data, {});
    const auto j = to_json(res, data.feature_names);
    CHECK(j["records"].size() == 6);
    CHECK(j["kept"].size() + j["dropped"].size() == 6);
    for (const auto& r : j["records"]) {
        CHECK(r["t_stats"].size() == 3);
        CHECK(r["kappa_hat"].get<int>() == static_cast<int>(r["l_hat"].size()));
        CHECK(r["l_stat"].is_null() == (r["kappa_hat"].get<int>() == 0));
    }
    const auto csv = records_csv(res, data.feature_names);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}
