#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dlm/data.hpp"
#include "dlm/error.hpp"
#include "support.hpp"

using namespace dlm;
using dlm::testing::random_matrix;
namespace fs = std::filesystem;

namespace {

const char* kHeader = "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT";

// Temporary file removed at scope exit.
struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& contents)
      : path((fs::temp_directory_path() / ("dlm_test_" + name)).string()) {
    std::ofstream(path) << contents;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

std::string stamp(std::chrono::sys_seconds t) {
  const auto day = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::year_month_day ymd{day};
  const std::chrono::hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

// Rows every `step` starting at `start`, values from a seeded generator.
std::string ett_rows(std::chrono::sys_seconds start, std::chrono::seconds step, int rows, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream out;
  out.precision(17);
  out << kHeader << '\n';
  for (int i = 0; i < rows; ++i) {
    out << stamp(start + i * step);
    for (int j = 0; j < 7; ++j) out << ',' << rng.uniform(-5.0, 20.0);
    out << '\n';
  }
  return out.str();
}

std::chrono::sys_seconds at(int y, unsigned m, unsigned d) {
  return std::chrono::sys_days{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("a three-row ETT file") {
  TempFile f("three.csv", std::string(kHeader) +
                              "\n2016-07-01 00:00:00,5.827,2.009,1.599,0.462,4.203,1.340,30.531"
                              "\n2016-07-01 01:00:00,5.693,2.076,1.492,0.426,4.142,1.371,27.787"
                              "\n2016-07-01 02:00:00,5.157,1.741,1.279,0.355,3.777,1.218,27.787\n");
  const Dataset d = load_ett_csv(f.path, EttOptions{12, 4, false});
  CHECK(d.obs_dim() == 1);
  CHECK(d.cmd_dim() == 6);
  CHECK(d.obs_columns == std::vector<std::string>{"OT"});
  CHECK(d.cmd_columns.front() == "HUFL");
  REQUIRE(d.train.size() == 1);
  CHECK(d.validation.empty());
  CHECK(d.train[0].steps() == 3);
  CHECK(d.train[0].x(1, 0) == 27.787);
  CHECK(d.train[0].u(2, 5) == 1.218);
  CHECK(d.train[0].timestamps[0] == "2016-07-01 00:00:00");
  CHECK_FALSE(d.normalized);
  CHECK(load_dataset(f.path).train[0].steps() == 3);
}

TEST_CASE("calendar-month split and training-only normalization") {
  const auto start = at(2016, 7, 1);
  const int rows = 4 * 31 * 17;  // six-hourly over about 17 months
  const std::string text = ett_rows(start, std::chrono::hours{6}, rows, 1);
  TempFile f("split.csv", text);
  const Dataset raw = load_ett_csv(f.path, EttOptions{12, 4, false});
  const Dataset d = load_ett_csv(f.path);
  REQUIRE(d.validation.size() == 1);
  // 2016-07-01 .. 2017-07-01 is 365 days; the next four months add 123 days.
  CHECK(d.train[0].steps() == 365 * 4);
  CHECK(d.validation[0].steps() == 123 * 4);
  CHECK(d.validation[0].timestamps.front() == "2017-07-01 00:00:00");
  CHECK(d.validation[0].timestamps.back() == "2017-10-31 18:00:00");
  CHECK(d.normalized);

  for (const Matrix* m : {&d.train[0].x, &d.train[0].u}) {
    const Eigen::RowVectorXd mean = m->colwise().mean();
    const Eigen::RowVectorXd var = (m->rowwise() - mean).array().square().colwise().mean();
    CHECK(mean.cwiseAbs().maxCoeff() < 1e-9);
    CHECK((var.array().sqrt() - 1.0).abs().maxCoeff() < 1e-9);
  }
  // Validation uses training statistics.
  CHECK((d.obs_norm.normalize(raw.validation[0].x) - d.validation[0].x).cwiseAbs().maxCoeff() < 1e-12);

  // Perturbing validation rows leaves the statistics untouched.
  std::istringstream in(text);
  std::ostringstream changed;
  std::string line;
  int i = -1;
  while (std::getline(in, line)) {
    if (i >= 365 * 4) line = line.substr(0, 19) + ",99,99,99,99,99,99,-99";
    changed << line << '\n';
    ++i;
  }
  TempFile g("split_changed.csv", changed.str());
  const Dataset e = load_ett_csv(g.path);
  CHECK(e.obs_norm.mean == d.obs_norm.mean);
  CHECK(e.obs_norm.std == d.obs_norm.std);
  CHECK(e.cmd_norm.mean == d.cmd_norm.mean);
  CHECK(e.cmd_norm.std == d.cmd_norm.std);
  CHECK(e.train[0].x == d.train[0].x);
}

TEST_CASE("month boundaries clamp to the end of shorter months") {
  const std::string text = ett_rows(at(2016, 1, 31), std::chrono::hours{24}, 70, 2);
  TempFile f("clamp.csv", text);
  const Dataset d = load_ett_csv(f.path, EttOptions{1, 1, false});
  // Training ends before 2016-02-29; validation ends before 2016-03-29.
  CHECK(d.train[0].steps() == 29);
  CHECK(d.validation[0].timestamps.front() == "2016-02-29 00:00:00");
  CHECK(d.validation[0].steps() == 29);
}

TEST_CASE("malformed ETT input is reported with its location") {
  const std::string good = ett_rows(at(2016, 7, 1), std::chrono::hours{1}, 6, 3);
  std::vector<std::string> lines;
  {
    std::istringstream in(good);
    std::string l;
    while (std::getline(in, l)) lines.push_back(l);
  }
  auto join = [](const std::vector<std::string>& ls) {
    std::string s;
    for (const auto& l : ls) s += l + "\n";
    return s;
  };
  SUBCASE("unparsable value") {
    auto ls = lines;
    ls[3] = ls[3].substr(0, 19) + ",1,2,abc,4,5,6,7";
    TempFile f("bad_value.csv", join(ls));
    const std::string msg = error_of([&] { load_ett_csv(f.path); });
    CHECK(msg.find(f.path + ":4:") != std::string::npos);
    CHECK(msg.find("MUFL") != std::string::npos);
  }
  SUBCASE("wrong field count") {
    auto ls = lines;
    ls[2] += ",8";
    TempFile f("bad_fields.csv", join(ls));
    CHECK(error_of([&] { load_ett_csv(f.path); }).find(f.path + ":3:") != std::string::npos);
  }
  SUBCASE("missing values list every affected line") {
    auto ls = lines;
    ls[2] = ls[2].substr(0, 19) + ",1,2,,4,5,6,7";
    ls[5] = ls[5].substr(0, 19) + ",1,2,3,4,5,6,NaN";
    TempFile f("gaps.csv", join(ls));
    const std::string msg = error_of([&] { load_ett_csv(f.path); });
    CHECK(msg.find("line(s) 3, 6") != std::string::npos);
  }
  SUBCASE("timestamps must increase") {
    auto ls = lines;
    std::swap(ls[3], ls[4]);
    TempFile f("order.csv", join(ls));
    CHECK_THROWS_AS(load_ett_csv(f.path), FormatError);
    CHECK(error_of([&] { load_ett_csv(f.path); }).find(":5:") != std::string::npos);
    auto dup = lines;
    dup[4] = dup[3];
    TempFile g("dup.csv", join(dup));
    CHECK(error_of([&] { load_ett_csv(g.path); }).find(":5:") != std::string::npos);
  }
  SUBCASE("bad timestamp and header") {
    auto ls = lines;
    ls[1] = "2016-13-01 00:00:00" + ls[1].substr(19);
    TempFile f("stamp.csv", join(ls));
    CHECK(error_of([&] { load_ett_csv(f.path); }).find(":2:") != std::string::npos);
    auto hs = lines;
    hs[0] = "date,HUFL,HULL,MUFL,MULL,LUFL,OT,LULL";
    TempFile g("header.csv", join(hs));
    CHECK_THROWS_AS(load_ett_csv(g.path), FormatError);
  }
  CHECK_THROWS_AS(load_ett_csv("/nonexistent/ett.csv"), IoError);
}

TEST_CASE("normalization") {
  Rng rng(4);
  const Matrix a = random_matrix(40, 3, rng, -7.0, 11.0);
  Matrix b = random_matrix(25, 3, rng, -7.0, 11.0);
  b.col(2).setConstant(2.5);
  Matrix a2 = a;
  a2.col(2).setConstant(2.5);
  const Normalization n = Normalization::fit({&a2, &b});
  CHECK(n.std(0, 2) == 1.0);
  CHECK(n.mean(0, 2) == 2.5);
  CHECK(n.normalize(b).col(2).isZero());
  CHECK((n.denormalize(n.normalize(a)) - a).cwiseAbs().maxCoeff() < 1e-12);
  // Population statistics over both parts.
  Matrix all(65, 3);
  all << a2, b;
  const Eigen::RowVectorXd mean = all.colwise().mean();
  CHECK((n.mean - Matrix(mean)).cwiseAbs().maxCoeff() < 1e-12);
  const double sd0 = std::sqrt((all.col(0).array() - mean(0)).square().mean());
  CHECK(n.std(0, 0) == doctest::Approx(sd0).epsilon(1e-13));
  CHECK_THROWS_AS(n.normalize(Matrix::Zero(2, 2)), DimensionError);
  CHECK_THROWS_AS(Normalization::fit({}), ContractError);
  const Normalization id = Normalization::identity(3);
  CHECK(id.normalize(a) == a);
}

TEST_CASE("synthetic generator") {
  SynthConfig c;
  c.sequences = 12;
  c.steps = 30;
  c.seed = 9;
  const Dataset a = synth_regime_data(c);
  const Dataset b = synth_regime_data(c);
  CHECK(a.train.size() == 10);
  CHECK(a.validation.size() == 2);
  CHECK(a.cmd_dim() == 2);
  CHECK(a.obs_dim() == 1);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].x == b.train[i].x);
    CHECK(a.train[i].u == b.train[i].u);
    CHECK(a.train[i].labels == b.train[i].labels);
    CHECK(a.train[i].steps() == 30);
  }
  c.seed = 10;
  CHECK(synth_regime_data(c).train[0].x != a.train[0].x);
  // A longer run shares its prefix: each sequence has its own stream.
  c.seed = 9;
  c.sequences = 24;
  const Dataset longer = synth_regime_data(c);
  CHECK(longer.train[3].x == a.train[3].x);

  CHECK(synth_bucket(c, -1.0) == 0);
  CHECK(synth_bucket(c, 0.0) == 1);
  CHECK(synth_bucket(c, 0.5) == 2);
  for (int k = 0; k < 3; ++k) {
    const Matrix t = synth_transition_matrix(c, k);
    CHECK((t.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-15);
    CHECK(t(k, k) == c.target_stay);
  }
  c.validation_fraction = 1.0;
  CHECK_THROWS_AS(synth_regime_data(c), ContractError);
}

TEST_CASE("synthetic statistics match the configured generator") {
  SynthConfig c;
  c.sequences = 1200;
  c.steps = 96;
  c.seed = 2024;
  const Dataset d = synth_regime_data(c);
  double sum[3] = {0, 0, 0}, count[3] = {0, 0, 0};
  double trans[3][3][3] = {};  // bucket, from, to
  for (const auto* split : {&d.train, &d.validation}) {
    for (const Segment& s : *split) {
      for (Index t = 0; t < s.steps(); ++t) {
        const int r = s.labels[static_cast<std::size_t>(t)];
        REQUIRE((r >= 0 && r < 3));
        sum[r] += s.x(t, 0);
        count[r] += 1.0;
        if (t > 0) trans[synth_bucket(c, s.u(t, 0))][s.labels[static_cast<std::size_t>(t - 1)]][r] += 1.0;
      }
    }
  }
  CHECK(count[0] + count[1] + count[2] >= 1e5);
  for (int r = 0; r < 3; ++r) CHECK(std::abs(sum[r] / count[r] - c.regime_means[static_cast<std::size_t>(r)]) < 0.05);

  int checked = 0;
  for (int b = 0; b < 3; ++b) {
    const Matrix expected = synth_transition_matrix(c, b);
    for (int from = 0; from < 3; ++from) {
      const double n = trans[b][from][0] + trans[b][from][1] + trans[b][from][2];
      // Four standard errors of the worst-case proportion fit inside 0.02.
      if (n < 2500) continue;
      ++checked;
      for (int to = 0; to < 3; ++to) CHECK(std::abs(trans[b][from][to] / n - expected(from, to)) < 0.02);
    }
  }
  CHECK(checked >= 7);
}

TEST_CASE("windows") {
  Segment s168{Matrix::Zero(168, 1), Matrix::Zero(168, 2), {}, {}};
  Segment s192{Matrix::Zero(192, 1), Matrix::Zero(192, 2), {}, {}};
  for (Index t = 0; t < 192; ++t) {
    s192.x(t, 0) = static_cast<double>(t);
    s192.u(t, 1) = -static_cast<double>(t);
  }
  CHECK(make_windows({s168}, 168, 24).size() == 1);
  const auto w = make_windows({s192}, 168, 24);
  REQUIRE(w.size() == 2);
  CHECK(w[1].x(0, 0) == 24.0);
  CHECK(w[1].u(167, 1) == -191.0);
  const auto both = make_windows({s168, s192}, 48, 24);
  CHECK(both.size() == 6 + 7);
  for (const Window& x : both) {
    CHECK(x.x.rows() == 48);
    CHECK(x.u.rows() == 48);
    CHECK(x.u.cols() == 2);
  }
  CHECK_THROWS_AS(make_windows({s168}, 169, 24), ContractError);
  CHECK_THROWS_AS(make_windows({s168}, 10, 0), ContractError);
}

TEST_CASE("series CSV round trip") {
  SynthConfig c;
  c.sequences = 6;
  c.steps = 20;
  c.seed = 3;
  Dataset d = synth_regime_data(c);
  const std::string path = (fs::temp_directory_path() / "dlm_test_series.csv").string();
  write_series_csv(d, path);
  const Dataset back = load_dataset(path);
  CHECK(back.cmd_columns == d.cmd_columns);
  CHECK(back.obs_columns == d.obs_columns);
  REQUIRE(back.train.size() == d.train.size());
  REQUIRE(back.validation.size() == d.validation.size());
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    CHECK(back.train[i].x == d.train[i].x);
    CHECK(back.train[i].u == d.train[i].u);
    CHECK(back.train[i].labels == d.train[i].labels);
  }
  CHECK(back.validation[0].x == d.validation[0].x);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "sequence,split,t,u.u1,u.u2,x.x,regime");
  in.close();

  std::ofstream(path) << header << "\n0,train,0,1,2,3,\n0,train,2,1,2,3,\n";
  CHECK(error_of([&] { load_series_csv(path); }).find(":3:") != std::string::npos);
  std::ofstream(path) << header << "\n0,test,0,1,2,3,\n";
  CHECK_THROWS_AS(load_series_csv(path), FormatError);
  std::ofstream(path) << header << "\n0,train,0,1,x,3,\n";
  CHECK(error_of([&] { load_series_csv(path); }).find("u.u2") != std::string::npos);
  std::remove(path.c_str());
}
