#include "dlm/data.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dlm/error.hpp"
#include "dlm/rng.hpp"

namespace dlm {

namespace {

const std::vector<std::string> kEttHeader = {"date", "HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string at_line(const std::string& path, std::size_t line) { return path + ":" + std::to_string(line) + ": "; }

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

using Seconds = std::chrono::sys_seconds;

// "YYYY-MM-DD HH:MM[:SS]" with ' ' or 'T' between date and time.
bool parse_timestamp(const std::string& s, Seconds& out) {
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') || s[13] != ':') return false;
  int y = 0;
  unsigned mo = 0, d = 0;
  int h = 0, mi = 0, sec = 0;
  const std::string_view v(s);
  if (!parse_int(v.substr(0, 4), y) || !parse_int(v.substr(5, 2), mo) || !parse_int(v.substr(8, 2), d) ||
      !parse_int(v.substr(11, 2), h) || !parse_int(v.substr(14, 2), mi)) {
    return false;
  }
  if (s.size() == 19) {
    if (s[16] != ':' || !parse_int(v.substr(17, 2), sec)) return false;
  } else if (s.size() != 16) {
    return false;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) return false;
  out = std::chrono::sys_days{ymd} + std::chrono::hours{h} + std::chrono::minutes{mi} + std::chrono::seconds{sec};
  return true;
}

// Same time of day, `months` calendar months later; day clamped to the month's end.
Seconds add_months(Seconds t, int months) {
  const auto day = std::chrono::floor<std::chrono::days>(t);
  const auto time_of_day = t - day;
  std::chrono::year_month_day ymd{day};
  ymd += std::chrono::months{months};
  if (!ymd.ok()) ymd = std::chrono::year_month_day_last{ymd.year(), std::chrono::month_day_last{ymd.month()}};
  return std::chrono::sys_days{ymd} + time_of_day;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

Segment rows_to_segment(const std::vector<std::vector<double>>& rows, std::size_t begin, std::size_t end,
                        Index q, Index d, const std::vector<std::string>& stamps) {
  Segment s;
  const auto n = static_cast<Index>(end - begin);
  s.u.resize(n, q);
  s.x.resize(n, d);
  for (std::size_t r = begin; r < end; ++r) {
    const auto i = static_cast<Index>(r - begin);
    for (Index j = 0; j < q; ++j) s.u(i, j) = rows[r][static_cast<std::size_t>(j)];
    for (Index j = 0; j < d; ++j) s.x(i, j) = rows[r][static_cast<std::size_t>(q + j)];
    s.timestamps.push_back(stamps[r]);
  }
  return s;
}

}  // namespace

Normalization Normalization::identity(Index columns) {
  return Normalization{Matrix::Zero(1, columns), Matrix::Ones(1, columns)};
}

Normalization Normalization::fit(const std::vector<const Matrix*>& parts) {
  if (parts.empty()) throw ContractError("normalization: no data");
  const Index cols = parts.front()->cols();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(cols);
  double n = 0.0;
  for (const Matrix* m : parts) {
    if (m->cols() != cols) throw DimensionError("normalization: column count differs between parts");
    sum += m->colwise().sum();
    n += static_cast<double>(m->rows());
  }
  if (n < 1.0) throw ContractError("normalization: no rows");
  const Eigen::RowVectorXd mean = sum / n;
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(cols);
  for (const Matrix* m : parts) sq += (m->rowwise() - mean).array().square().matrix().colwise().sum();
  Normalization out{mean, (sq / n).array().sqrt().matrix()};
  for (Index j = 0; j < cols; ++j) {
    if (!(out.std(0, j) > 0.0)) out.std(0, j) = 1.0;
  }
  return out;
}

Matrix Normalization::normalize(const Matrix& m) const {
  if (m.cols() != mean.cols()) throw DimensionError("normalize: " + shape_string(m) + " vs " + shape_string(mean));
  return ((m.rowwise() - mean.row(0)).array().rowwise() / std.row(0).array()).matrix();
}

Matrix Normalization::denormalize(const Matrix& m) const {
  if (m.cols() != mean.cols()) throw DimensionError("denormalize: " + shape_string(m) + " vs " + shape_string(mean));
  return ((m.array().rowwise() * std.row(0).array()).rowwise() + mean.row(0).array()).matrix();
}

void Dataset::fit_normalization() {
  if (normalized) throw ContractError("dataset is already normalized");
  std::vector<const Matrix*> xs, us;
  for (const Segment& s : train) {
    xs.push_back(&s.x);
    us.push_back(&s.u);
  }
  apply_normalization(Normalization::fit(xs), Normalization::fit(us));
}

void Dataset::apply_normalization(const Normalization& obs, const Normalization& cmd) {
  if (normalized) throw ContractError("dataset is already normalized");
  obs_norm = obs;
  cmd_norm = cmd;
  for (auto* split : {&train, &validation}) {
    for (Segment& s : *split) {
      s.x = obs.normalize(s.x);
      s.u = cmd.normalize(s.u);
    }
  }
  normalized = true;
}

Dataset load_ett_csv(const std::string& path, const EttOptions& options) {
  if (options.train_months < 1 || options.validation_months < 0) throw ContractError("ett: invalid split lengths");
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw FormatError(path + ": empty file");
  std::vector<std::string> header = split_csv(lines[0]);
  for (auto& h : header) h = trim(h);
  if (header != kEttHeader) {
    throw FormatError(at_line(path, 1) + "expected header date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT");
  }

  std::vector<std::vector<double>> rows;
  std::vector<Seconds> times;
  std::vector<std::string> stamps;
  std::vector<std::size_t> gaps;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::size_t line_no = i + 1;
    std::vector<std::string> f = split_csv(lines[i]);
    if (f.size() != kEttHeader.size()) {
      throw FormatError(at_line(path, line_no) + "expected " + std::to_string(kEttHeader.size()) + " fields, found " +
                        std::to_string(f.size()));
    }
    Seconds t;
    if (!parse_timestamp(trim(f[0]), t)) throw FormatError(at_line(path, line_no) + "bad timestamp '" + f[0] + "'");
    if (!times.empty() && t <= times.back()) {
      throw FormatError(at_line(path, line_no) + "timestamp '" + trim(f[0]) + "' does not increase");
    }
    std::vector<double> values(kEttHeader.size() - 1);
    bool gap = false;
    for (std::size_t j = 1; j < f.size(); ++j) {
      const std::string v = trim(f[j]);
      if (v.empty() || v == "nan" || v == "NaN" || v == "NA") {
        gap = true;
        continue;
      }
      if (!parse_double(v, values[j - 1])) {
        throw FormatError(at_line(path, line_no) + "column " + kEttHeader[j] + ": cannot parse '" + v + "'");
      }
    }
    if (gap) gaps.push_back(line_no);
    times.push_back(t);
    stamps.push_back(trim(f[0]));
    rows.push_back(std::move(values));
  }
  if (!gaps.empty()) {
    std::string list;
    for (std::size_t k = 0; k < gaps.size() && k < 20; ++k) list += (k ? ", " : "") + std::to_string(gaps[k]);
    if (gaps.size() > 20) list += ", ...";
    throw FormatError(path + ": " + std::to_string(gaps.size()) + " row(s) with missing values at line(s) " + list);
  }
  if (rows.empty()) throw FormatError(path + ": no data rows");

  const Seconds train_end = add_months(times.front(), options.train_months);
  const Seconds val_end = add_months(train_end, options.validation_months);
  std::size_t split = 0;
  while (split < times.size() && times[split] < train_end) ++split;
  std::size_t stop = split;
  while (stop < times.size() && times[stop] < val_end) ++stop;

  Dataset ds;
  ds.cmd_columns.assign(kEttHeader.begin() + 1, kEttHeader.end() - 1);
  ds.obs_columns = {kEttHeader.back()};
  ds.train.push_back(rows_to_segment(rows, 0, split, 6, 1, stamps));
  if (stop > split) ds.validation.push_back(rows_to_segment(rows, split, stop, 6, 1, stamps));
  ds.obs_norm = Normalization::identity(1);
  ds.cmd_norm = Normalization::identity(6);
  if (options.normalize) ds.fit_normalization();
  return ds;
}

void SynthConfig::validate() const {
  if (sequences < 1 || steps < 1) throw ContractError("synth: sequences and steps must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ContractError("synth: validation_fraction must lie in [0, 1)");
  }
  if (!(std::abs(command_rho) < 1.0)) throw ContractError("synth: |command_rho| must be < 1");
  if (!(bucket_edge > 0.0)) throw ContractError("synth: bucket_edge must be positive");
  const bool probs_ok = target_stay >= 0.0 && target_stay <= 1.0 && move_to_target >= 0.0 && move_to_other >= 0.0 &&
                        move_to_target + move_to_other <= 1.0;
  if (!probs_ok) throw ContractError("synth: invalid transition probabilities");
  for (std::size_t r = 0; r < 3; ++r) {
    if (!(std::abs(ar_coefficients[r]) < 1.0) || !(noise_scales[r] >= 0.0)) {
      throw ContractError("synth: AR coefficients must satisfy |phi| < 1 and noise scales be >= 0");
    }
  }
}

int synth_bucket(const SynthConfig& config, double u1) {
  if (u1 < -config.bucket_edge) return 0;
  if (u1 > config.bucket_edge) return 2;
  return 1;
}

Matrix synth_transition_matrix(const SynthConfig& config, int bucket) {
  if (bucket < 0 || bucket > 2) throw ContractError("synth: bucket must be 0, 1 or 2");
  Matrix a(3, 3);
  for (int from = 0; from < 3; ++from) {
    for (int to = 0; to < 3; ++to) {
      double p;
      if (from == bucket) {
        p = to == from ? config.target_stay : (1.0 - config.target_stay) / 2.0;
      } else if (to == bucket) {
        p = config.move_to_target;
      } else if (to == from) {
        p = 1.0 - config.move_to_target - config.move_to_other;
      } else {
        p = config.move_to_other;
      }
      a(from, to) = p;
    }
  }
  return a;
}

Dataset synth_regime_data(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  ds.cmd_columns = {"u1", "u2"};
  ds.obs_columns = {"x"};
  ds.obs_norm = Normalization::identity(1);
  ds.cmd_norm = Normalization::identity(2);
  std::array<Matrix, 3> chains;
  for (int b = 0; b < 3; ++b) chains[static_cast<std::size_t>(b)] = synth_transition_matrix(config, b);

  const Index n_val = static_cast<Index>(std::floor(static_cast<double>(config.sequences) * config.validation_fraction));
  const Index n_train = config.sequences - n_val;
  const double innovation = std::sqrt(1.0 - config.command_rho * config.command_rho);
  for (Index s = 0; s < config.sequences; ++s) {
    Rng rng = Rng::derive(config.seed, {0x5e9, static_cast<std::uint64_t>(s)});
    Segment seg;
    seg.u.resize(config.steps, 2);
    seg.x.resize(config.steps, 1);
    seg.labels.resize(static_cast<std::size_t>(config.steps));
    double u1 = rng.normal();
    double u2 = rng.normal();
    int regime = synth_bucket(config, u1);
    const auto r0 = static_cast<std::size_t>(regime);
    double a = config.noise_scales[r0] / std::sqrt(1.0 - config.ar_coefficients[r0] * config.ar_coefficients[r0]) *
               rng.normal();
    for (Index t = 0; t < config.steps; ++t) {
      if (t > 0) {
        u1 = config.command_rho * u1 + innovation * rng.normal();
        u2 = config.command_rho * u2 + innovation * rng.normal();
        const Matrix& chain = chains[static_cast<std::size_t>(synth_bucket(config, u1))];
        const double draw = rng.uniform();
        double acc = 0.0;
        int next = 2;
        for (int to = 0; to < 2; ++to) {
          acc += chain(regime, to);
          if (draw < acc) {
            next = to;
            break;
          }
        }
        regime = next;
        const auto r = static_cast<std::size_t>(regime);
        a = config.ar_coefficients[r] * a + config.noise_scales[r] * rng.normal();
      }
      seg.u(t, 0) = u1;
      seg.u(t, 1) = u2;
      seg.x(t, 0) = config.regime_means[static_cast<std::size_t>(regime)] + a;
      seg.labels[static_cast<std::size_t>(t)] = regime;
    }
    (s < n_train ? ds.train : ds.validation).push_back(std::move(seg));
  }
  return ds;
}

std::vector<Window> make_windows(const std::vector<Segment>& segments, Index steps, Index stride) {
  if (steps < 1 || stride < 1) throw ContractError("make_windows: T and stride must be >= 1");
  std::vector<Window> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    if (s.steps() < steps) {
      throw ContractError("make_windows: window length " + std::to_string(steps) + " exceeds segment " +
                          std::to_string(i) + " of length " + std::to_string(s.steps()));
    }
    for (Index start = 0; start + steps <= s.steps(); start += stride) {
      out.push_back(Window{s.x.middleRows(start, steps), s.u.middleRows(start, steps)});
    }
  }
  return out;
}

void write_series_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << std::setprecision(17);
  out << "sequence,split,t";
  for (const auto& c : data.cmd_columns) out << ",u." << c;
  for (const auto& c : data.obs_columns) out << ",x." << c;
  out << ",regime\n";
  std::size_t seq = 0;
  for (const auto& [name, split] : {std::pair{"train", &data.train}, std::pair{"validation", &data.validation}}) {
    for (const Segment& s : *split) {
      for (Index t = 0; t < s.steps(); ++t) {
        out << seq << ',' << name << ',' << t;
        for (Index j = 0; j < s.u.cols(); ++j) out << ',' << s.u(t, j);
        for (Index j = 0; j < s.x.cols(); ++j) out << ',' << s.x(t, j);
        out << ',';
        if (!s.labels.empty()) out << s.labels[static_cast<std::size_t>(t)];
        out << '\n';
      }
      ++seq;
    }
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

Dataset load_series_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw FormatError(path + ": empty file");
  const std::vector<std::string> header = split_csv(lines[0]);
  if (header.size() < 5 || header[0] != "sequence" || header[1] != "split" || header[2] != "t" ||
      header.back() != "regime") {
    throw FormatError(at_line(path, 1) + "expected header sequence,split,t,u.*,x.*,regime");
  }
  Dataset ds;
  for (std::size_t j = 3; j + 1 < header.size(); ++j) {
    if (header[j].rfind("u.", 0) == 0 && ds.obs_columns.empty()) {
      ds.cmd_columns.push_back(header[j].substr(2));
    } else if (header[j].rfind("x.", 0) == 0) {
      ds.obs_columns.push_back(header[j].substr(2));
    } else {
      throw FormatError(at_line(path, 1) + "unexpected column '" + header[j] + "'");
    }
  }
  if (ds.cmd_columns.empty() || ds.obs_columns.empty()) throw FormatError(at_line(path, 1) + "no u.* or x.* columns");
  const Index q = ds.cmd_dim();
  const Index d = ds.obs_dim();
  ds.obs_norm = Normalization::identity(d);
  ds.cmd_norm = Normalization::identity(q);

  struct Pending {
    std::string split;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
  };
  std::vector<Pending> seqs;
  long long current = -1;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::size_t line_no = i + 1;
    const std::vector<std::string> f = split_csv(lines[i]);
    if (f.size() != header.size()) {
      throw FormatError(at_line(path, line_no) + "expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(f.size()));
    }
    long long seq = 0;
    long long t = 0;
    if (!parse_int(std::string_view(f[0]), seq) || !parse_int(std::string_view(f[2]), t)) {
      throw FormatError(at_line(path, line_no) + "bad sequence or step index");
    }
    if (f[1] != "train" && f[1] != "validation") throw FormatError(at_line(path, line_no) + "unknown split '" + f[1] + "'");
    if (seq != current) {
      if (seq != current + 1) throw FormatError(at_line(path, line_no) + "sequence ids must be consecutive from 0");
      current = seq;
      seqs.push_back(Pending{f[1], {}, {}});
    }
    Pending& p = seqs.back();
    if (f[1] != p.split) throw FormatError(at_line(path, line_no) + "split changes inside a sequence");
    if (t != static_cast<long long>(p.rows.size())) throw FormatError(at_line(path, line_no) + "steps must be consecutive from 0");
    std::vector<double> values(static_cast<std::size_t>(q + d));
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (!parse_double(trim(f[3 + j]), values[j])) {
        throw FormatError(at_line(path, line_no) + "column " + header[3 + j] + ": cannot parse '" + f[3 + j] + "'");
      }
    }
    p.rows.push_back(std::move(values));
    const std::string label = trim(f.back());
    if (!label.empty()) {
      int r = 0;
      if (!parse_int(std::string_view(label), r)) throw FormatError(at_line(path, line_no) + "bad regime label");
      p.labels.push_back(r);
    }
  }
  for (Pending& p : seqs) {
    std::vector<std::string> none(p.rows.size());
    Segment s = rows_to_segment(p.rows, 0, p.rows.size(), q, d, none);
    s.timestamps.clear();
    if (p.labels.size() == p.rows.size()) s.labels = std::move(p.labels);
    (p.split == "train" ? ds.train : ds.validation).push_back(std::move(s));
  }
  if (ds.train.empty()) throw FormatError(path + ": no training sequences");
  return ds;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string first;
  std::getline(in, first);
  if (first.rfind("date", 0) == 0) return load_ett_csv(path);
  return load_series_csv(path);
}

}  // namespace dlm
