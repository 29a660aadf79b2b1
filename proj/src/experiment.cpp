#include "spotdiff/experiment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "spotdiff/byteio.hpp"
#include "spotdiff/external_denoiser.hpp"
#include "spotdiff/replay_denoiser.hpp"

namespace spotdiff {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(trim(text));
  T value{};
  in >> value;
  if (!in || !in.eof()) throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const auto v = trim(text);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string compare_to_string(const std::vector<CompareEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    if (!out.empty()) out += ", ";
    out += to_string(e.strategy);
    if (e.strategy == Strategy::multidiffusion) out += ":" + std::to_string(e.stride);
  }
  return out;
}

std::vector<CompareEntry> parse_compare(const std::string& text) {
  std::vector<CompareEntry> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    CompareEntry e;
    const auto colon = item.find(':');
    e.strategy = parse_strategy(trim(item.substr(0, colon)));
    if (colon != std::string::npos) {
      e.stride = parse_number<int>("compare.strategies", item.substr(colon + 1));
    }
    if (e.strategy == Strategy::multidiffusion && e.stride < 1) {
      throw ConfigError("compare.strategies: multidiffusion needs a stride, e.g. multidiffusion:16");
    }
    out.push_back(e);
  }
  if (out.empty()) throw ConfigError("compare.strategies is empty");
  return out;
}

struct Setting {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::map<std::string, Setting>& settings() {
  using C = ExperimentConfig;
  static const std::map<std::string, Setting> table = [] {
    std::map<std::string, Setting> t;
    auto int_field = [&t](const std::string& key, auto member) {
      t[key] = {[member](const C& c) { return std::to_string(member(const_cast<C&>(c))); },
                [member, key](C& c, const std::string& v) { member(c) = parse_number<int>(key, v); }};
    };
    auto dbl_field = [&t](const std::string& key, auto member) {
      t[key] = {[member](const C& c) { return format_double(member(const_cast<C&>(c))); },
                [member, key](C& c, const std::string& v) { member(c) = parse_number<double>(key, v); }};
    };
    auto str_field = [&t](const std::string& key, auto member) {
      t[key] = {[member](const C& c) { return member(const_cast<C&>(c)); },
                [member](C& c, const std::string& v) { member(c) = trim(v); }};
    };
    auto bool_field = [&t](const std::string& key, auto member) {
      t[key] = {[member](const C& c) { return std::string(member(const_cast<C&>(c)) ? "true" : "false"); },
                [member, key](C& c, const std::string& v) { member(c) = parse_bool(key, v); }};
    };

    t["sampler.strategy"] = {[](const C& c) { return to_string(c.sampler.strategy); },
                             [](C& c, const std::string& v) { c.sampler.strategy = parse_strategy(trim(v)); }};
    int_field("sampler.panorama_width", [](C& c) -> int& { return c.sampler.panorama_width; });
    int_field("sampler.window_width", [](C& c) -> int& { return c.sampler.window_width; });
    int_field("sampler.stride", [](C& c) -> int& { return c.sampler.stride; });
    int_field("sampler.height", [](C& c) -> int& { return c.sampler.height; });
    int_field("sampler.channels", [](C& c) -> int& { return c.sampler.channels; });
    int_field("sampler.steps", [](C& c) -> int& { return c.sampler.steps; });
    int_field("sampler.workers", [](C& c) -> int& { return c.sampler.workers; });
    t["sampler.rule"] = {
        [](const C& c) { return std::string(c.sampler.rule.kind == StepRule::Kind::ddpm ? "ddpm" : "ddim"); },
        [](C& c, const std::string& v) {
          const auto s = trim(v);
          if (s == "ddpm") c.sampler.rule.kind = StepRule::Kind::ddpm;
          else if (s == "ddim") c.sampler.rule.kind = StepRule::Kind::ddim;
          else throw ConfigError("sampler.rule: expected ddpm or ddim, got '" + s + "'");
        }};
    dbl_field("sampler.eta", [](C& c) -> double& { return c.sampler.rule.eta; });
    t["sampler.seed"] = {[](const C& c) { return std::to_string(c.sampler.seed); },
                         [](C& c, const std::string& v) {
                           c.sampler.seed = parse_number<std::uint64_t>("sampler.seed", v);
                         }};
    t["sampler.condition"] = {[](const C& c) { return std::to_string(c.sampler.condition.value); },
                              [](C& c, const std::string& v) {
                                c.sampler.condition.value = parse_number<std::uint32_t>("sampler.condition", v);
                              }};
    t["sampler.shift_law"] = {[](const C& c) { return to_string(c.sampler.shift_law); },
                              [](C& c, const std::string& v) { c.sampler.shift_law = parse_shift_law(trim(v)); }};
    str_field("sampler.shift_file", [](C& c) -> std::string& { return c.shift_file; });
    t["sampler.schedule"] = {[](const C& c) { return to_string(c.schedule); },
                             [](C& c, const std::string& v) { c.schedule = parse_schedule_kind(trim(v)); }};

    dbl_field("prior.sigma", [](C& c) -> double& { return c.prior.sigma; });
    dbl_field("prior.length_scale", [](C& c) -> double& { return c.prior.length_scale; });
    dbl_field("prior.mean_amplitude", [](C& c) -> double& { return c.prior.mean_amplitude; });
    int_field("prior.mean_periods", [](C& c) -> int& { return c.prior.mean_periods; });

    str_field("denoiser.kind", [](C& c) -> std::string& { return c.denoiser.kind; });
    str_field("denoiser.fixture", [](C& c) -> std::string& { return c.denoiser.fixture; });
    str_field("denoiser.command", [](C& c) -> std::string& { return c.denoiser.command; });
    str_field("denoiser.record", [](C& c) -> std::string& { return c.denoiser.record; });
    int_field("denoiser.timeout_ms", [](C& c) -> int& { return c.denoiser.timeout_ms; });

    str_field("output.dir", [](C& c) -> std::string& { return c.output.dir; });
    str_field("output.name", [](C& c) -> std::string& { return c.output.name; });
    bool_field("output.pgm", [](C& c) -> bool& { return c.output.pgm; });
    bool_field("output.raw", [](C& c) -> bool& { return c.output.raw; });
    bool_field("output.csv", [](C& c) -> bool& { return c.output.csv; });
    int_field("output.repeat", [](C& c) -> int& { return c.output.repeat; });

    t["compare.strategies"] = {[](const C& c) { return compare_to_string(c.compare); },
                               [](C& c, const std::string& v) { c.compare = parse_compare(v); }};

    int_field("calibrate.seeds", [](C& c) -> int& { return c.calibrate.seeds; });
    t["calibrate.master_seed"] = {[](const C& c) { return std::to_string(c.calibrate.master_seed); },
                                  [](C& c, const std::string& v) {
                                    c.calibrate.master_seed = parse_number<std::uint64_t>("calibrate.master_seed", v);
                                  }};
    return t;
  }();
  return table;
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = settings().find(key);
  if (it == settings().end()) throw ConfigError("unknown key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void finalize(ExperimentConfig& cfg) {
  if (cfg.sampler.shift_law == ShiftSampler::Law::fixed_sequence) {
    if (cfg.shift_file.empty()) throw ConfigError("shift_law = fixed needs sampler.shift_file");
    try {
      cfg.sampler.fixed_shifts = load_shift_sequence(cfg.shift_file);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  try {
    cfg.sampler.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!(cfg.prior.sigma > 0.0)) throw ConfigError("prior.sigma must be positive");
  if (!(cfg.prior.length_scale >= 0.0)) throw ConfigError("prior.length_scale must be >= 0");
  const auto& kind = cfg.denoiser.kind;
  if (kind != "mrf" && kind != "replay" && kind != "external") {
    throw ConfigError("denoiser.kind must be mrf, replay or external, got '" + kind + "'");
  }
  if (kind == "replay" && cfg.denoiser.fixture.empty()) throw ConfigError("replay needs denoiser.fixture");
  if (kind == "external" && cfg.denoiser.command.empty()) throw ConfigError("external needs denoiser.command");
  if (cfg.denoiser.timeout_ms < 1) throw ConfigError("denoiser.timeout_ms must be >= 1");
  if (cfg.output.repeat < 1) throw ConfigError("output.repeat must be >= 1");
  if (cfg.calibrate.seeds < 1) throw ConfigError("calibrate.seeds must be >= 1");
}

}  // namespace

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [key, s] : settings()) out += key + " = " + s.get(*this) + "\n";
  return out;
}

std::string ExperimentConfig::digest() const {
  // Where results go does not change what they are.
  std::string text;
  std::istringstream lines(canonical());
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("output.dir ", 0) == 0 || line.rfind("output.name ", 0) == 0 ||
        line.rfind("denoiser.record ", 0) == 0) {
      continue;
    }
    text += line + "\n";
  }
  byteio::Fnv1a h;
  h.update(text);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h.value());
  return buf;
}

GaussianPrior ExperimentConfig::make_prior(int panorama_width) const {
  return GaussianPrior::sinusoid(panorama_width, prior.mean_amplitude, prior.mean_periods,
                                 prior.sigma, prior.length_scale);
}

void apply_setting(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_key(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void apply_denoiser_flag(ExperimentConfig& cfg, const std::string& flag) {
  if (flag == "mrf" || flag == "replay") {
    cfg.denoiser.kind = flag;
  } else if (flag.rfind("external:", 0) == 0) {
    cfg.denoiser.kind = "external";
    cfg.denoiser.command = flag.substr(9);
  } else {
    throw ConfigError("--denoiser must be mrf, replay or external:<cmd>, got '" + flag + "'");
  }
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.sampler.rule = {StepRule::Kind::ddpm, 0.0};  // eta only matters for ddim
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      if (!value.empty()) throw ConfigError("nested value under " + section + "." + key);
      set_key(cfg, section + "." + key, value.data());
    }
  }
  for (const auto& o : overrides) apply_setting(cfg, o);
  finalize(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config(text, overrides);
}

std::unique_ptr<Denoiser> make_denoiser(const ExperimentConfig& cfg, const NoiseSchedule& schedule) {
  const auto& s = cfg.sampler;
  if (cfg.denoiser.kind == "mrf") {
    return std::make_unique<AnalyticDenoiser>(cfg.make_prior(s.panorama_width), schedule);
  }
  if (cfg.denoiser.kind == "replay") {
    return std::make_unique<ReplayDenoiser>(Fixture::load(cfg.denoiser.fixture));
  }
  ExternalDenoiser::Options o;
  o.command = cfg.denoiser.command;
  o.hello = {static_cast<std::uint32_t>(s.window_width), static_cast<std::uint32_t>(s.height),
             static_cast<std::uint32_t>(s.channels), static_cast<std::uint32_t>(s.steps),
             cfg.schedule};
  o.timeout = std::chrono::milliseconds(cfg.denoiser.timeout_ms);
  return std::make_unique<ExternalDenoiser>(std::move(o));
}

namespace {

std::vector<std::uint8_t> to_grey(const PanoramaLatent& p) {
  const double lo = p.values().minCoeff();
  const double hi = p.values().maxCoeff();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(p.size()));
  std::size_t k = 0;
  for (int c = 0; c < p.channels(); ++c) {
    for (int y = 0; y < p.height(); ++y) {
      for (int x = 0; x < p.width(); ++x) {
        pixels[k++] = static_cast<std::uint8_t>(std::lround((p(x, y, c) - lo) * scale));
      }
    }
  }
  return pixels;
}

void write_p5(const std::string& path, int width, int height, const std::vector<std::uint8_t>& pixels,
              const std::string& comment) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P5\n# " << comment << "\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace

void write_pgm(const std::string& path, const PanoramaLatent& p, const std::string& comment) {
  write_p5(path, p.width(), p.height() * p.channels(), to_grey(p), comment);
}

void write_montage(const std::string& path, const std::vector<PanoramaLatent>& panels,
                   const std::string& comment) {
  if (panels.empty()) throw InvalidArgument("montage needs at least one panel");
  constexpr int gutter = 4;
  int width = 0;
  int height = 0;
  for (const auto& p : panels) {
    width += p.width();
    height = std::max(height, p.height() * p.channels());
  }
  width += gutter * static_cast<int>(panels.size() - 1);
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height, 0);
  int x0 = 0;
  for (const auto& p : panels) {
    const auto grey = to_grey(p);
    const int rows = p.height() * p.channels();
    for (int r = 0; r < rows; ++r) {
      std::copy_n(grey.begin() + static_cast<std::ptrdiff_t>(r) * p.width(), p.width(),
                  pixels.begin() + static_cast<std::ptrdiff_t>(r) * width + x0);
    }
    x0 += p.width() + gutter;
  }
  write_p5(path, width, height, pixels, comment);
}

std::string metrics_csv_header() {
  return "strategy,panorama_width,window_width,stride,steps,seed,calls_per_step,total_calls,"
         "wall_ms,boundary_energy,interior_energy,ratio,coverage_p,config_digest";
}

std::string metrics_csv_row(const RunRecord& record, const RunMetrics& m,
                            const std::string& config_digest) {
  const auto& c = record.config;
  std::ostringstream row;
  row << to_string(c.strategy) << ',' << c.panorama_width << ',' << c.window_width << ','
      << c.effective_stride() << ',' << c.steps << ',' << c.seed << ',' << m.compute.calls_per_step
      << ',' << m.compute.total_calls << ',' << format_double(m.compute.total_wall_ms) << ',';
  if (m.seam) {
    row << format_double(m.seam->boundary_energy) << ',' << format_double(m.seam->interior_energy)
        << ',' << (m.seam->ratio ? format_double(*m.seam->ratio) : "NA") << ',';
  } else {
    row << "NA,NA,NA,";
  }
  row << (m.coverage ? format_double(m.coverage->p_value) : "NA") << ',' << config_digest;
  return row.str();
}

namespace {

struct Session {
  ExperimentConfig cfg;
  std::string digest;
  NoiseSchedule schedule;
};

Session open_session(const CommandOptions& opts) {
  ExperimentConfig cfg = load_config(opts.config_path, opts.sets);
  if (opts.out) cfg.output.dir = *opts.out;
  if (opts.denoiser) {
    apply_denoiser_flag(cfg, *opts.denoiser);
    finalize(cfg);
  }
  if (opts.seeds && *opts.seeds < 1) throw ConfigError("--seeds must be >= 1");
  auto schedule = NoiseSchedule::make(cfg.schedule, cfg.sampler.steps);
  std::string digest = cfg.digest();
  return {std::move(cfg), std::move(digest), std::move(schedule)};
}

std::string run_name(const ExperimentConfig& cfg, const SamplerConfig& s, const std::string& digest,
                     bool force_seed) {
  std::string name = cfg.output.name;
  if (name.empty()) {
    name = to_string(s.strategy);
    if (s.strategy == Strategy::multidiffusion) name += "-w" + std::to_string(s.stride);
    name += "-s" + std::to_string(s.seed) + "-" + digest.substr(0, 8);
  } else if (force_seed) {
    name += "-s" + std::to_string(s.seed);
  }
  return name;
}

class CsvAppender {
 public:
  CsvAppender(const fs::path& path, const std::string& header) : out_(path, std::ios::app) {
    if (!out_) throw IoError("cannot open " + path.string());
    if (fs::file_size(path) == 0) out_ << header << '\n';
  }
  void row(const std::string& r) { out_ << r << '\n'; }

 private:
  std::ofstream out_;
};

void emit_run(const Session& s, const RunRecord& record, const RunMetrics& metrics,
              const std::string& name, CsvAppender* csv, std::ostream& log) {
  const fs::path dir(s.cfg.output.dir);
  const std::string comment = "spotdiff config " + s.digest + " run " + name;
  if (s.cfg.output.pgm) write_pgm((dir / (name + ".pgm")).string(), record.final, comment);
  if (s.cfg.output.raw) write_plat((dir / (name + ".plat")).string(), record.final, s.digest);
  if (csv) csv->row(metrics_csv_row(record, metrics, s.digest));
  log << name << ": " << metrics.compute.total_calls << " calls, "
      << metrics.compute.total_wall_ms << " ms";
  if (metrics.seam && metrics.seam->ratio) log << ", seam ratio " << *metrics.seam->ratio;
  log << '\n';
}

template <typename Body>
int guarded(std::ostream& log, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidConfig& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidGeometry& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }
}

/// Runs one config with the session's denoiser, recording a fixture if asked.
RunRecord run_with(const Session& s, Denoiser& denoiser, const SamplerConfig& cfg) {
  if (s.cfg.denoiser.record.empty()) return run(cfg, denoiser, s.schedule);
  protocol::Hello hello{static_cast<std::uint32_t>(cfg.window_width), static_cast<std::uint32_t>(cfg.height),
                        static_cast<std::uint32_t>(cfg.channels), static_cast<std::uint32_t>(cfg.steps),
                        s.cfg.schedule};
  RecordingDenoiser recorder(denoiser, hello);
  auto record = run(cfg, recorder, s.schedule);
  recorder.fixture().save(s.cfg.denoiser.record);
  return record;
}

}  // namespace

int cmd_generate(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const Session s = open_session(opts);
    const int repeat = opts.seeds.value_or(s.cfg.output.repeat);
    auto denoiser = make_denoiser(s.cfg, s.schedule);
    fs::create_directories(s.cfg.output.dir);
    std::optional<CsvAppender> csv;
    if (s.cfg.output.csv) csv.emplace(fs::path(s.cfg.output.dir) / "metrics.csv", metrics_csv_header());
    for (int r = 0; r < repeat; ++r) {
      SamplerConfig cfg = s.cfg.sampler;
      cfg.seed += static_cast<std::uint64_t>(r);
      const auto record = run_with(s, *denoiser, cfg);
      emit_run(s, record, measure(record), run_name(s.cfg, cfg, s.digest, repeat > 1),
               csv ? &*csv : nullptr, log);
    }
    return 0;
  });
}

int cmd_compare(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const Session s = open_session(opts);
    const int seeds = opts.seeds.value_or(1);
    std::vector<SamplerConfig> cfgs;
    for (const auto& e : s.cfg.compare) {
      SamplerConfig c = s.cfg.sampler;
      c.strategy = e.strategy;
      if (e.strategy == Strategy::multidiffusion) c.stride = e.stride;
      try {
        c.validate();
      } catch (const Error& err) {
        throw ConfigError(to_string(e.strategy) + ": " + err.what());
      }
      cfgs.push_back(c);
    }
    auto denoiser = make_denoiser(s.cfg, s.schedule);
    fs::create_directories(s.cfg.output.dir);
    std::optional<CsvAppender> csv;
    if (s.cfg.output.csv) csv.emplace(fs::path(s.cfg.output.dir) / "metrics.csv", metrics_csv_header());

    std::vector<std::vector<double>> ratios(cfgs.size());
    std::vector<long long> calls(cfgs.size(), 0);
    for (int r = 0; r < seeds; ++r) {
      auto batch = cfgs;
      for (auto& c : batch) c.seed += static_cast<std::uint64_t>(r);
      const auto result = run_compare(batch, *denoiser, s.schedule);
      std::vector<PanoramaLatent> panels;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        emit_run(s, result.runs[i], result.metrics[i], run_name(s.cfg, batch[i], s.digest, seeds > 1),
                 csv ? &*csv : nullptr, log);
        if (result.metrics[i].seam && result.metrics[i].seam->ratio) {
          ratios[i].push_back(*result.metrics[i].seam->ratio);
        }
        calls[i] = result.metrics[i].compute.total_calls;
        panels.push_back(result.runs[i].final);
      }
      if (r == 0 && s.cfg.output.pgm) {
        write_montage((fs::path(s.cfg.output.dir) / ("compare-" + s.digest.substr(0, 8) + ".pgm")).string(),
                      panels, "spotdiff config " + s.digest + " compare montage");
      }
    }

    std::size_t base = 0;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
      if (cfgs[i].strategy == Strategy::spotdiffusion) {
        base = i;
        break;
      }
    }
    std::ofstream summary(fs::path(s.cfg.output.dir) / "summary.csv", std::ios::trunc);
    summary << "strategy,stride,views,total_calls,call_ratio,seeds,ratio_p01,ratio_p50,ratio_p99,config_digest\n";
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
      summary << to_string(cfgs[i].strategy) << ',' << cfgs[i].effective_stride() << ','
              << cfgs[i].views() << ',' << calls[i] << ','
              << format_double(static_cast<double>(calls[i]) / static_cast<double>(calls[base])) << ','
              << seeds << ',';
      if (ratios[i].empty()) {
        summary << "NA,NA,NA,";
      } else {
        summary << format_double(percentile(ratios[i], 1.0)) << ','
                << format_double(percentile(ratios[i], 50.0)) << ','
                << format_double(percentile(ratios[i], 99.0)) << ',';
      }
      summary << s.digest << '\n';
    }
    if (!summary) throw IoError("failed writing summary.csv");
    return 0;
  });
}

int cmd_calibrate(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const Session s = open_session(opts);
    if (s.cfg.denoiser.kind != "mrf") throw ConfigError("calibration needs the mrf denoiser");
    const int seeds = opts.seeds.value_or(s.cfg.calibrate.seeds);
    const auto& base = s.cfg.sampler;
    if (base.panorama_width % base.window_width != 0) {
      throw ConfigError("calibration needs panorama width divisible by window width");
    }
    AnalyticDenoiser denoiser(s.cfg.make_prior(base.panorama_width), s.schedule);

    std::vector<RunRecord> reference;
    std::vector<RunRecord> disjoint;
    for (int i = 0; i < seeds; ++i) {
      SamplerConfig ref = base;
      ref.strategy = Strategy::plain;
      ref.window_width = base.panorama_width;
      ref.seed = s.cfg.calibrate.master_seed + static_cast<std::uint64_t>(i);
      reference.push_back(run(ref, denoiser, s.schedule));

      SamplerConfig tiled = base;
      tiled.strategy = Strategy::multidiffusion;
      tiled.stride = base.window_width;
      tiled.seed = ref.seed;
      disjoint.push_back(run(tiled, denoiser, s.schedule));
    }
    const auto boundaries = disjoint_boundaries(base.panorama_width, base.window_width);
    const auto edge = panorama_edge();
    const auto t = threshold_calibration(reference, disjoint, boundaries, edge,
                                         std::min<std::size_t>(100, static_cast<std::size_t>(seeds)));
    fs::create_directories(s.cfg.output.dir);
    std::ofstream out(fs::path(s.cfg.output.dir) / "thresholds.csv", std::ios::trunc);
    out << "no_seam_threshold,seam_threshold,seeds,master_seed,length_scale,config_digest\n"
        << format_double(t.no_seam) << ',' << format_double(t.seam) << ',' << seeds << ','
        << s.cfg.calibrate.master_seed << ',' << format_double(s.cfg.prior.length_scale) << ','
        << s.digest << '\n';
    if (!out) throw IoError("failed writing thresholds.csv");
    log << "no-seam threshold " << t.no_seam << ", seam threshold " << t.seam << '\n';
    return 0;
  });
}

ServeExpectation parse_expectation(const std::string& name) {
  if (name == "any") return ServeExpectation::any;
  if (name == "echo") return ServeExpectation::echo;
  if (name == "zero") return ServeExpectation::zero;
  if (name == "analytic") return ServeExpectation::analytic;
  throw ConfigError("--expect must be any, echo, zero or analytic");
}

int cmd_serve_check(const CommandOptions& opts, int requests, ServeExpectation expect,
                    std::ostream& log) {
  return guarded(log, [&]() -> int {
    const Session s = open_session(opts);
    if (s.cfg.denoiser.kind != "external") {
      throw ConfigError("serve-check needs --denoiser external:<cmd>");
    }
    if (requests < 1) throw ConfigError("--requests must be >= 1");
    const auto& sc = s.cfg.sampler;
    ExternalDenoiser::Options o;
    o.command = s.cfg.denoiser.command;
    o.hello = {static_cast<std::uint32_t>(sc.window_width), static_cast<std::uint32_t>(sc.height),
               static_cast<std::uint32_t>(sc.channels), static_cast<std::uint32_t>(sc.steps),
               s.cfg.schedule};
    o.timeout = std::chrono::milliseconds(s.cfg.denoiser.timeout_ms);
    ExternalDenoiser client(o);

    // Zero-mean, independent-pixel prior: the closed form a mock can share.
    GaussianPrior diag = GaussianPrior::sinusoid(sc.window_width, 0.0, 0, s.cfg.prior.sigma, 0.0);

    RunRng rng(sc.seed);
    std::normal_distribution<float> normal;
    double worst = 0.0;
    int mismatches = 0;
    for (int i = 0; i < requests; ++i) {
      protocol::Request req;
      req.timestep = static_cast<std::uint32_t>(i % sc.steps);
      req.window_index = static_cast<std::uint32_t>(i);
      req.condition = sc.condition.value;
      req.payload.resize(o.hello.payload_count());
      for (auto& v : req.payload) v = normal(rng);
      const auto resp = client.exchange(req);

      bool ok = true;
      switch (expect) {
        case ServeExpectation::any:
          break;
        case ServeExpectation::echo:
          ok = std::equal(req.payload.begin(), req.payload.end(), resp.payload.begin(),
                          [](float a, float b) { return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b); });
          break;
        case ServeExpectation::zero:
          ok = std::all_of(resp.payload.begin(), resp.payload.end(), [](float v) { return v == 0.0f; });
          break;
        case ServeExpectation::analytic: {
          WindowLatent window(sc.window_width, sc.height, sc.channels);
          for (std::size_t k = 0; k < req.payload.size(); ++k) window.values()[k] = req.payload[k];
          const auto ref = analytic_predict_eps(diag, window, 0, static_cast<int>(req.timestep), s.schedule);
          for (std::size_t k = 0; k < resp.payload.size(); ++k) {
            const double err = std::abs(resp.payload[k] - ref.values()[k]) /
                               std::max(1.0, std::abs(ref.values()[k]));
            worst = std::max(worst, err);
          }
          ok = worst <= 1e-6;
          break;
        }
      }
      if (!ok) ++mismatches;
    }
    const int status = client.shutdown();
    log << "serve-check: " << requests << " exchanges, " << mismatches << " mismatched";
    if (expect == ServeExpectation::analytic) log << ", max relative error " << worst;
    log << ", server exit " << status << '\n';
    return (mismatches == 0 && status == 0) ? 0 : 1;
  });
}

}  // namespace spotdiff
