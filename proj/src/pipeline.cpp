#include "tofsr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>
#include <utility>

#include "json.hpp"

#include "tofsr/prony.hpp"
#include "tofsr/signal.hpp"

namespace tofsr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file_bytes(const std::string& path, const char* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out.write(data, static_cast<std::streamsize>(size));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<char> bytes(static_cast<std::size_t>(size));
  if (size > 0) in.read(bytes.data(), size);
  if (!in) throw std::runtime_error("read failed: " + path);
  return bytes;
}

}  // namespace

double PixelReportMap::convergence_rate() const {
  if (pixels.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& p : pixels) ok += p.converged ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(pixels.size());
}

PixelReportMap batch_solve(const ImageTensor& tensor, const SolverConfig& config,
                           int parallelism, const KernelTrace* known_kernel) {
  tensor.validate();
  config.validate();
  if (parallelism < 1) throw std::invalid_argument("parallelism must be positive");
  if (known_kernel != nullptr) {
    if (known_kernel->samples.size() != tensor.grid.num_samples ||
        known_kernel->grid.sample_period != tensor.grid.sample_period)
      throw std::invalid_argument("known kernel does not match the tensor grid");
  }

  PixelReportMap out;
  out.height = tensor.height;
  out.width = tensor.width;
  out.grid = tensor.grid;
  out.pixels.resize(static_cast<std::size_t>(tensor.num_pixels()));

  const int total = tensor.num_pixels();
  std::atomic<int> next{0};

  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= total) return;
      const int row = i / tensor.width;
      const int col = i % tensor.width;
      PixelReport& pr = out.pixels[static_cast<std::size_t>(i)];
      pr.x = col;
      pr.y = row;
      MeasurementTrace trace{tensor.trace(row, col), tensor.grid};
      try {
        if (known_kernel == nullptr) {
          SolverConfig cfg = config;
          cfg.seed = config.seed ^ static_cast<std::uint64_t>(i);
          SolveReport rep = blind_solve(trace, cfg);
          pr.spikes = std::move(rep.spikes);
          pr.residual = rep.residual;
          pr.converged = rep.converged;
          pr.kernel = std::move(rep.kernel.samples);
        } else {
          SpikeTrain spikes = prony_solve(trace, *known_kernel, config.K, config.band_threshold);
          const CplxVec d = dirichlet_spikes(spikes, tensor.grid);
          const double residual = trace_residual(trace, known_kernel->samples, d);
          const double sigma = config.sigma ? *config.sigma : estimate_sigma(trace);
          pr.spikes = std::move(spikes);
          pr.residual = residual;
          // An exact fit (residual at numerical noise level) counts as
          // converged even when the noise estimate is essentially zero.
          pr.converged = residual <= std::max(sigma, 1e-9 * trace.samples.norm());
          pr.kernel = known_kernel->samples;
        }
      } catch (const std::exception& e) {
        pr.spikes = SpikeTrain{};
        pr.residual = -1.0;
        pr.converged = false;
        pr.error = e.what();
        pr.kernel = RealVec();
      }
    }
  };

  const int threads = std::min(parallelism, total);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::size_t failed = 0;
  std::string first_error;
  for (const auto& p : out.pixels) {
    if (!p.error.empty()) {
      ++failed;
      if (first_error.empty()) first_error = p.error;
    }
  }
  if (total > 0 && failed == static_cast<std::size_t>(total))
    throw std::runtime_error("all pixels failed: " + first_error);
  return out;
}

ScalarMap depth_map(const PixelReportMap& reports, int k) {
  if (k < 0) throw std::invalid_argument("spike index must be nonnegative");
  ScalarMap map;
  map.height = reports.height;
  map.width = reports.width;
  map.values.assign(static_cast<std::size_t>(reports.num_pixels()), kNaN);
  for (std::size_t i = 0; i < reports.pixels.size(); ++i) {
    const PixelReport& p = reports.pixels[i];
    if (p.error.empty() && k < p.spikes.order())
      map.values[i] = 0.5 * kSpeedOfLight * p.spikes.spikes[static_cast<std::size_t>(k)].delay;
  }
  return map;
}

ScalarMap amplitude_map(const PixelReportMap& reports, int k) {
  if (k < 0) throw std::invalid_argument("spike index must be nonnegative");
  ScalarMap map;
  map.height = reports.height;
  map.width = reports.width;
  map.values.assign(static_cast<std::size_t>(reports.num_pixels()), kNaN);
  for (std::size_t i = 0; i < reports.pixels.size(); ++i) {
    const PixelReport& p = reports.pixels[i];
    if (p.error.empty() && k < p.spikes.order())
      map.values[i] = p.spikes.spikes[static_cast<std::size_t>(k)].amplitude;
  }
  return map;
}

double separation(double tau_a, double tau_b) {
  return 0.5 * kSpeedOfLight * std::abs(tau_a - tau_b);
}

std::vector<ScalarMap> lif_frames(const PixelReportMap& reports, const std::vector<double>& times) {
  if (times.empty()) return {};
  if (reports.grid.num_samples < 2)
    throw std::invalid_argument("reports lack an acquisition grid");
  const double window = reports.grid.window();
  for (double t : times) {
    if (!(t >= 0.0 && t < window))
      throw std::invalid_argument("frame time outside acquisition window");
  }

  std::vector<ScalarMap> frames(times.size());
  for (auto& f : frames) {
    f.height = reports.height;
    f.width = reports.width;
    f.values.assign(static_cast<std::size_t>(reports.num_pixels()), 0.0);
  }

  for (std::size_t i = 0; i < reports.pixels.size(); ++i) {
    const PixelReport& p = reports.pixels[i];
    if (!p.error.empty() || p.spikes.order() == 0 || p.kernel.size() == 0) continue;
    const CplxVec spectrum = dft(p.kernel);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      double acc = 0.0;
      for (const Spike& s : p.spikes.spikes)
        acc += s.amplitude * trig_interp(spectrum, times[ti] - s.delay, window);
      frames[ti].values[i] = std::max(0.0, acc);
    }
  }
  return frames;
}

double mse(const RealVec& a, const RealVec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mse length mismatch");
  if (a.size() == 0) throw std::invalid_argument("mse of empty vectors");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double psnr(const RealVec& ref, const RealVec& x) {
  const double peak = ref.cwiseAbs().maxCoeff();
  const double err = mse(ref, x);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / err);
}

GaugeAlignment align_to_reference(const RealVec& reference, const RealVec& estimate) {
  if (reference.size() != estimate.size())
    throw std::invalid_argument("alignment length mismatch");
  const Eigen::Index N = reference.size();
  if (N < 2) throw std::invalid_argument("alignment needs at least two samples");

  GaugeAlignment result;
  if (estimate.cwiseAbs().maxCoeff() == 0.0) {
    result.aligned = estimate;
    result.scale = 0.0;
    result.shift_samples = 0.0;
    return result;
  }

  // Coarse integer shift from the circular cross-correlation peak.
  const CplxVec rhat = dft(reference);
  const CplxVec ehat = dft(estimate);
  const RealVec corr = idft(rhat.cwiseProduct(ehat.conjugate())).real();
  Eigen::Index s0 = 0;
  corr.cwiseAbs().maxCoeff(&s0);

  // Fractional refinement: maximize the squared correlation over one sample
  // on either side of the coarse peak (golden-section style ternary search).
  auto corr_at = [&](double shift) {
    const RealVec shifted = fractional_circular_shift(estimate, shift);
    return reference.dot(shifted);
  };
  double lo = static_cast<double>(s0) - 1.0;
  double hi = static_cast<double>(s0) + 1.0;
  for (int it = 0; it < 200 && (hi - lo) > 1e-12; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    const double f1 = corr_at(m1);
    const double f2 = corr_at(m2);
    if (f1 * f1 < f2 * f2)
      lo = m1;
    else
      hi = m2;
  }
  const double shift = 0.5 * (lo + hi);

  RealVec shifted = fractional_circular_shift(estimate, shift);
  const double denom = shifted.squaredNorm();
  const double scale = denom > 0.0 ? reference.dot(shifted) / denom : 0.0;
  result.aligned = scale * shifted;
  result.scale = scale;
  result.shift_samples = shift;
  return result;
}

double psnr_kernel(const RealVec& true_kernel, const RealVec& est_kernel) {
  return psnr(true_kernel, align_to_reference(true_kernel, est_kernel).aligned);
}

void save_tensor(const ImageTensor& tensor, const std::string& path_stem, bool as_f32) {
  tensor.validate();
  nlohmann::json header;
  header["version"] = 1;
  header["height"] = tensor.height;
  header["width"] = tensor.width;
  header["num_samples"] = tensor.grid.num_samples;
  header["sample_period_s"] = tensor.grid.sample_period;
  header["dtype"] = as_f32 ? "f32" : "f64";
  const std::string text = header.dump(2) + "\n";
  write_file_bytes(path_stem + ".json", text.data(), text.size());

  if (as_f32) {
    std::vector<float> payload(tensor.data.size());
    for (std::size_t i = 0; i < tensor.data.size(); ++i)
      payload[i] = static_cast<float>(tensor.data[i]);
    write_file_bytes(path_stem + ".bin", reinterpret_cast<const char*>(payload.data()),
                     payload.size() * sizeof(float));
  } else {
    write_file_bytes(path_stem + ".bin", reinterpret_cast<const char*>(tensor.data.data()),
                     tensor.data.size() * sizeof(double));
  }
}

ImageTensor load_tensor(const std::string& path_stem) {
  const std::vector<char> text = read_file_bytes(path_stem + ".json");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("malformed tensor header: " + path_stem + ".json");
  }
  if (!header.is_object() || !header.contains("version") || !header.contains("height") ||
      !header.contains("width") || !header.contains("num_samples") ||
      !header.contains("sample_period_s") || !header.contains("dtype") ||
      !header["version"].is_number_integer() || !header["height"].is_number_integer() ||
      !header["width"].is_number_integer() || !header["num_samples"].is_number_integer() ||
      !header["sample_period_s"].is_number() || !header["dtype"].is_string())
    throw std::runtime_error("malformed tensor header: " + path_stem + ".json");
  if (header["version"].get<int>() != 1)
    throw std::runtime_error("unsupported tensor version: " + path_stem + ".json");
  const std::string dtype = header["dtype"].get<std::string>();
  if (dtype != "f32" && dtype != "f64")
    throw std::runtime_error("malformed tensor header: " + path_stem + ".json");

  ImageTensor tensor;
  tensor.height = header["height"].get<int>();
  tensor.width = header["width"].get<int>();
  tensor.grid.num_samples = header["num_samples"].get<int>();
  tensor.grid.sample_period = header["sample_period_s"].get<double>();
  if (tensor.height <= 0 || tensor.width <= 0)
    throw std::runtime_error("malformed tensor header: " + path_stem + ".json");
  tensor.grid.validate();

  const std::vector<char> payload = read_file_bytes(path_stem + ".bin");
  const std::size_t count = static_cast<std::size_t>(tensor.num_pixels()) *
                            static_cast<std::size_t>(tensor.grid.num_samples);
  const std::size_t expected = count * (dtype == "f32" ? sizeof(float) : sizeof(double));
  if (payload.size() != expected)
    throw std::runtime_error("tensor payload size mismatch: " + path_stem + ".bin");

  tensor.data.resize(count);
  if (dtype == "f32") {
    const float* src = reinterpret_cast<const float*>(payload.data());
    for (std::size_t i = 0; i < count; ++i) tensor.data[i] = static_cast<double>(src[i]);
  } else {
    const double* src = reinterpret_cast<const double*>(payload.data());
    std::copy(src, src + count, tensor.data.begin());
  }
  tensor.validate();
  return tensor;
}

void save_reports(const PixelReportMap& reports, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  for (const PixelReport& p : reports.pixels) {
    nlohmann::json rec;
    rec["x"] = p.x;
    rec["y"] = p.y;
    nlohmann::json spikes = nlohmann::json::array();
    for (const Spike& s : p.spikes.spikes)
      spikes.push_back({{"tau_s", s.delay}, {"gamma", s.amplitude}});
    rec["spikes"] = std::move(spikes);
    rec["residual"] = p.residual;
    rec["converged"] = p.converged;
    if (!p.error.empty()) rec["error"] = p.error;
    out << rec.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

PixelReportMap load_reports(const std::string& path, const AcquisitionGrid* grid) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);

  std::map<std::pair<int, int>, PixelReport> by_coord;
  int max_x = -1;
  int max_y = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw std::runtime_error("malformed report record: " + path);
    }
    if (!rec.is_object() || !rec.contains("x") || !rec.contains("y") ||
        !rec.contains("spikes") || !rec.contains("residual") || !rec.contains("converged") ||
        !rec["x"].is_number_integer() || !rec["y"].is_number_integer() ||
        !rec["spikes"].is_array() || !rec["residual"].is_number() ||
        !rec["converged"].is_boolean())
      throw std::runtime_error("malformed report record: " + path);

    PixelReport p;
    p.x = rec["x"].get<int>();
    p.y = rec["y"].get<int>();
    if (p.x < 0 || p.y < 0) throw std::runtime_error("malformed report record: " + path);
    for (const auto& s : rec["spikes"]) {
      if (!s.is_object() || !s.contains("tau_s") || !s.contains("gamma") ||
          !s["tau_s"].is_number() || !s["gamma"].is_number())
        throw std::runtime_error("malformed report record: " + path);
      p.spikes.spikes.push_back(Spike{s["tau_s"].get<double>(), s["gamma"].get<double>()});
    }
    p.spikes.sort_by_delay();
    p.residual = rec["residual"].get<double>();
    p.converged = rec["converged"].get<bool>();
    if (rec.contains("error") && rec["error"].is_string())
      p.error = rec["error"].get<std::string>();
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
    const bool inserted = by_coord.emplace(std::make_pair(p.y, p.x), std::move(p)).second;
    if (!inserted) throw std::runtime_error("duplicate report coordinates: " + path);
  }
  if (by_coord.empty()) throw std::runtime_error("empty report file: " + path);

  PixelReportMap map;
  map.height = max_y + 1;
  map.width = max_x + 1;
  if (grid != nullptr) map.grid = *grid;
  if (by_coord.size() != static_cast<std::size_t>(map.num_pixels()))
    throw std::runtime_error("report grid incomplete: " + path);
  map.pixels.resize(by_coord.size());
  for (auto& [coord, rep] : by_coord)
    map.at(coord.first, coord.second) = std::move(rep);
  return map;
}

ImageTensor kernels_tensor(const PixelReportMap& reports) {
  if (reports.grid.num_samples < 2)
    throw std::invalid_argument("reports lack an acquisition grid");
  ImageTensor tensor;
  tensor.height = reports.height;
  tensor.width = reports.width;
  tensor.grid = reports.grid;
  tensor.data.assign(static_cast<std::size_t>(tensor.num_pixels()) *
                         static_cast<std::size_t>(tensor.grid.num_samples),
                     0.0);
  for (int y = 0; y < reports.height; ++y) {
    for (int x = 0; x < reports.width; ++x) {
      const PixelReport& p = reports.at(y, x);
      if (p.kernel.size() == tensor.grid.num_samples) tensor.set_trace(y, x, p.kernel);
    }
  }
  return tensor;
}

void attach_kernels(PixelReportMap& reports, const ImageTensor& kernels) {
  if (kernels.height != reports.height || kernels.width != reports.width)
    throw std::invalid_argument("kernel tensor dimensions do not match the reports");
  reports.grid = kernels.grid;
  for (int y = 0; y < reports.height; ++y)
    for (int x = 0; x < reports.width; ++x) reports.at(y, x).kernel = kernels.trace(y, x);
}

void save_scalar_map(const ScalarMap& map, const std::string& path_stem) {
  if (map.height <= 0 || map.width <= 0 ||
      map.values.size() != static_cast<std::size_t>(map.height) * map.width)
    throw std::invalid_argument("scalar map dimensions mismatch");

  std::string csv;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (x > 0) csv += ",";
      csv += format_double(map.at(y, x));
    }
    csv += "\n";
  }
  write_file_bytes(path_stem + ".csv", csv.data(), csv.size());

  std::vector<float> payload(map.values.size());
  for (std::size_t i = 0; i < map.values.size(); ++i)
    payload[i] = static_cast<float>(map.values[i]);
  write_file_bytes(path_stem + ".bin", reinterpret_cast<const char*>(payload.data()),
                   payload.size() * sizeof(float));

  nlohmann::json header;
  header["version"] = 1;
  header["height"] = map.height;
  header["width"] = map.width;
  header["dtype"] = "f32";
  const std::string text = header.dump(2) + "\n";
  write_file_bytes(path_stem + ".json", text.data(), text.size());
}

}  // namespace tofsr
