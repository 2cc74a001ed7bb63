#include "stftr/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stftr/errors.hpp"
#include "stftr/refit_cv.hpp"

namespace stftr {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";

void to_little_endian(std::vector<char>& bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t o = 0; o + 8 <= bytes.size(); o += 8) std::reverse(bytes.begin() + o, bytes.begin() + o + 8);
  }
}

ElementType parse_element_type(const std::string& name, const std::string& array) {
  if (name == "f64") return ElementType::f64;
  if (name == "c128") return ElementType::c128;
  throw IoError(array, "unknown element type '" + name + "'");
}

bool valid_name(const std::string& name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; });
}

Json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("", "cannot open " + what + " " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw IoError("", "malformed " + what + " " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::string_view element_type_name(ElementType type) { return type == ElementType::f64 ? "f64" : "c128"; }
std::size_t element_size(ElementType type) { return type == ElementType::f64 ? 8 : 16; }

std::size_t ArrayInfo::count() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

ContainerWriter::ContainerWriter(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("", "cannot create directory " + dir_.string() + ": " + ec.message());
}

void ContainerWriter::write_raw(const ArrayInfo& info, const void* data) {
  if (finished_) throw IoError(info.name, "container already finished");
  if (!valid_name(info.name)) throw IoError(info.name, "invalid array name");
  for (const auto& a : arrays_)
    if (a.name == info.name) throw IoError(info.name, "duplicate array name");
  std::vector<char> bytes(info.count() * element_size(info.type));
  if (!bytes.empty()) std::memcpy(bytes.data(), data, bytes.size());
  to_little_endian(bytes);
  std::ofstream out(dir_ / info.file, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(info.name, "write failed");
  arrays_.push_back(info);
}

void ContainerWriter::add(const std::string& name, std::vector<std::size_t> shape, const double* data) {
  write_raw({name, name + ".bin", std::move(shape), ElementType::f64}, data);
}

void ContainerWriter::add(const std::string& name, std::vector<std::size_t> shape, const cplx* data) {
  write_raw({name, name + ".bin", std::move(shape), ElementType::c128}, data);
}

void ContainerWriter::add(const std::string& name, const RowMatrix& a) {
  add(name, {static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols())}, a.data());
}

void ContainerWriter::add(const std::string& name, const CoefTensor& z) {
  add(name, {z.m(), z.s(), z.p()}, z.values().data());
}

void ContainerWriter::add(const std::string& name, const std::vector<RowMatrix>& stack) {
  const std::size_t rows = stack.empty() ? 0 : static_cast<std::size_t>(stack.front().rows());
  const std::size_t cols = stack.empty() ? 0 : static_cast<std::size_t>(stack.front().cols());
  std::vector<double> flat;
  flat.reserve(stack.size() * rows * cols);
  for (const auto& M : stack) {
    if (static_cast<std::size_t>(M.rows()) != rows || static_cast<std::size_t>(M.cols()) != cols)
      throw IoError(name, "stacked matrices differ in shape");
    flat.insert(flat.end(), M.data(), M.data() + M.size());
  }
  add(name, {stack.size(), rows, cols}, flat.data());
}

void ContainerWriter::finish() {
  Json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["byte_order"] = "little-endian";
  manifest["layout"] = "row-major";
  Json arrays = Json::array();
  for (const auto& a : arrays_)
    arrays.push_back({{"name", a.name}, {"file", a.file}, {"dtype", element_type_name(a.type)}, {"shape", a.shape}});
  manifest["arrays"] = std::move(arrays);
  manifest["meta"] = meta_;
  std::ofstream out(dir_ / kManifest, std::ios::trunc);
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("", "cannot write " + (dir_ / kManifest).string());
  finished_ = true;
}

ContainerReader::ContainerReader(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::is_directory(dir_)) throw IoError("", "container directory " + dir_.string() + " does not exist");
  const Json manifest = read_json_file(dir_ / kManifest, "manifest");
  try {
    const int version = manifest.at("schema_version").get<int>();
    if (version != kSchemaVersion)
      throw IoError("", "unsupported schema version " + std::to_string(version) + " (expected " +
                            std::to_string(kSchemaVersion) + ")");
    if (manifest.at("byte_order").get<std::string>() != "little-endian")
      throw IoError("", "unsupported byte order");
    if (manifest.at("layout").get<std::string>() != "row-major") throw IoError("", "unsupported layout");
    for (const auto& entry : manifest.at("arrays")) {
      ArrayInfo info;
      info.name = entry.at("name").get<std::string>();
      try {
        info.file = entry.at("file").get<std::string>();
        info.type = parse_element_type(entry.at("dtype").get<std::string>(), info.name);
        info.shape = entry.at("shape").get<std::vector<std::size_t>>();
      } catch (const Json::exception& e) {
        throw IoError(info.name, std::string("malformed manifest entry: ") + e.what());
      }
      if (info.file.find('/') != std::string::npos || info.file.find("..") != std::string::npos)
        throw IoError(info.name, "file name must be local to the container");
      const fs::path path = dir_ / info.file;
      std::error_code ec;
      const auto bytes = fs::file_size(path, ec);
      if (ec) throw IoError(info.name, "missing data file " + path.string());
      const std::size_t want = info.count() * element_size(info.type);
      if (bytes != want)
        throw IoError(info.name, "manifest shape implies " + std::to_string(want) + " bytes but " + info.file +
                                     " holds " + std::to_string(bytes));
      arrays_.push_back(std::move(info));
    }
    meta_ = manifest.contains("meta") ? manifest.at("meta") : Json::object();
  } catch (const Json::exception& e) {
    throw IoError("", "malformed manifest in " + dir_.string() + ": " + e.what());
  }
}

bool ContainerReader::has(const std::string& name) const {
  return std::any_of(arrays_.begin(), arrays_.end(), [&](const ArrayInfo& a) { return a.name == name; });
}

const ArrayInfo& ContainerReader::info(const std::string& name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return a;
  throw IoError(name, "not present in " + dir_.string());
}

void ContainerReader::read_raw(const ArrayInfo& info, void* out) const {
  std::vector<char> bytes(info.count() * element_size(info.type));
  std::ifstream in(dir_ / info.file, std::ios::binary);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!in && !bytes.empty()) throw IoError(info.name, "read failed");
  to_little_endian(bytes);
  if (!bytes.empty()) std::memcpy(out, bytes.data(), bytes.size());
}

std::vector<double> ContainerReader::read_f64(const std::string& name) const {
  const auto& a = info(name);
  if (a.type != ElementType::f64) throw IoError(name, "expected f64 elements");
  std::vector<double> out(a.count());
  read_raw(a, out.data());
  return out;
}

std::vector<cplx> ContainerReader::read_c128(const std::string& name) const {
  const auto& a = info(name);
  if (a.type != ElementType::c128) throw IoError(name, "expected c128 elements");
  std::vector<cplx> out(a.count());
  read_raw(a, out.data());
  return out;
}

RowMatrix ContainerReader::matrix(const std::string& name) const {
  const auto& a = info(name);
  if (a.shape.size() != 2) throw IoError(name, "expected a 2-d array");
  const auto v = read_f64(name);
  RowMatrix out(static_cast<Eigen::Index>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

CoefTensor ContainerReader::tensor(const std::string& name) const {
  const auto& a = info(name);
  if (a.shape.size() != 3) throw IoError(name, "expected a 3-d array");
  const auto v = read_c128(name);
  CoefTensor z(a.shape[0], a.shape[1], a.shape[2]);
  std::copy(v.begin(), v.end(), z.values().begin());
  return z;
}

std::vector<RowMatrix> ContainerReader::stack(const std::string& name) const {
  const auto& a = info(name);
  if (a.shape.size() != 3) throw IoError(name, "expected a 3-d array");
  const auto v = read_f64(name);
  const std::size_t block = a.shape[1] * a.shape[2];
  std::vector<RowMatrix> out;
  for (std::size_t r = 0; r < a.shape[0]; ++r) {
    RowMatrix M(static_cast<Eigen::Index>(a.shape[1]), static_cast<Eigen::Index>(a.shape[2]));
    std::copy(v.begin() + static_cast<std::ptrdiff_t>(r * block), v.begin() + static_cast<std::ptrdiff_t>((r + 1) * block),
              M.data());
    out.push_back(std::move(M));
  }
  return out;
}

std::vector<double> to_doubles(const std::vector<std::size_t>& v) {
  return std::vector<double>(v.begin(), v.end());
}

std::vector<std::size_t> to_indices(const std::vector<double>& v, const std::string& array) {
  std::vector<std::size_t> out;
  out.reserve(v.size());
  for (double x : v) {
    if (!(x >= 0.0) || x != std::floor(x) || x > 9007199254740992.0) throw IoError(array, "expected index values");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

void write_dataset(const fs::path& dir, const TrialDataset& data, const GroundTruth* truth, const Json& spec) {
  data.validate(false);
  ContainerWriter w(dir);
  w.add("M", data.M);
  w.add("G", data.G);
  w.add("X", data.X);
  if (truth) {
    w.add("Z_true", truth->z_true);
    w.add("S_true", truth->noiseless_sources);
    w.add("noise_cov", truth->noise_covariance);
  }
  w.meta()["kind"] = "dataset";
  w.meta()["sampling_rate"] = data.sampling_rate;
  w.meta()["whitened"] = data.whitened;
  w.meta()["spec"] = spec;
  w.finish();
}

StoredDataset read_dataset(const fs::path& dir) {
  const ContainerReader r(dir);
  StoredDataset out;
  out.data.M = r.stack("M");
  out.data.G = r.matrix("G");
  out.data.X = r.matrix("X");
  out.data.sampling_rate = r.meta().value("sampling_rate", 100.0);
  out.data.whitened = r.meta().value("whitened", false);
  if (r.has("Z_true")) out.z_true = r.tensor("Z_true");
  if (r.has("S_true")) out.noiseless_sources = r.stack("S_true");
  if (r.has("noise_cov")) out.noise_covariance = r.matrix("noise_cov");
  out.spec = r.meta().contains("spec") ? r.meta().at("spec") : Json();
  try {
    out.data.validate(false);
  } catch (const Error& e) {
    throw IoError("M", std::string("inconsistent dataset: ") + e.what());
  }
  if (!out.noiseless_sources.empty() && out.noiseless_sources.size() != out.data.q())
    throw IoError("S_true", "trial count differs from M");
  return out;
}

TrialDataset fitting_data(const StoredDataset& stored) {
  if (stored.data.whitened || !stored.noise_covariance) return stored.data;
  if (stored.noise_covariance->cwiseAbs().maxCoeff() == 0.0) return stored.data;
  return prewhiten(stored.data, *stored.noise_covariance);
}

namespace {

Json split_json(const DataSplit& split) {
  return {{"first_trials", split.first_trials}, {"second_trials", split.second_trials}};
}

void write_cv_csv(const fs::path& path, const std::vector<CvRow>& table) {
  std::ofstream out(path, std::ios::trunc);
  write_cv_table(out, table);
  if (!out) throw IoError("", "cannot write " + path.string());
}

}  // namespace

void write_fit(const fs::path& dir, const StftrFit& fit, const StftDictionary& dict) {
  ContainerWriter w(dir);
  w.add("Z", fit.z);
  w.add("Z_sparse", fit.z_sparse);
  const auto support = to_doubles(fit.support);
  w.add("support", {support.size()}, support.data());
  auto& meta = w.meta();
  meta["kind"] = "fit";
  meta["method"] = "stft-r";
  meta["window"] = dict.window_length();
  meta["step"] = dict.step();
  meta["alpha"] = fit.alpha;
  meta["beta"] = fit.beta;
  meta["gamma"] = fit.gamma;
  meta["lambda2"] = fit.lambda2;
  meta["split"] = split_json(fit.split);
  meta["kkt"] = {{"converged", fit.solve.converged},
                 {"total_violation", fit.solve.kkt.total_violation},
                 {"tolerance", fit.solve.kkt_tolerance},
                 {"baseline_violation", fit.solve.baseline_violation},
                 {"multipliers_converged", fit.solve.kkt.multipliers_converged},
                 {"fista_hit_max_iter", fit.solve.fista_hit_max_iter}};
  Json trace = Json::array();
  for (const auto& t : fit.solve.trace)
    trace.push_back({{"round", t.round},
                     {"active_groups", t.active_groups},
                     {"active_rows", t.active_rows},
                     {"violation", t.violation},
                     {"objective", t.objective},
                     {"fista_iterations", t.fista_iterations},
                     {"lipschitz", t.lipschitz}});
  meta["trace"] = std::move(trace);
  meta["warnings"] = fit.warnings;
  w.finish();
  if (fit.cv) write_cv_csv(dir / "cv_table.csv", fit.cv->table);
}

void write_fit(const fs::path& dir, const MnerFit& fit, const StftDictionary& dict) {
  ContainerWriter w(dir);
  w.add("Z", fit.regression.z);
  auto& meta = w.meta();
  meta["kind"] = "fit";
  meta["method"] = "mne-r";
  meta["window"] = dict.window_length();
  meta["step"] = dict.step();
  meta["lambda"] = fit.lambda;
  meta["split"] = split_json(fit.split);
  meta["warnings"] = Json::array();
  w.finish();
}

StoredFit read_fit(const fs::path& dir) {
  if (!fs::exists(dir / kManifest)) throw IoError("", "fit artifact " + (dir / kManifest).string() + " is missing");
  const ContainerReader r(dir);
  StoredFit out;
  if (r.meta().value("kind", "") != "fit") throw IoError("", dir.string() + " is not a fit container");
  out.method = r.meta().value("method", "");
  out.z = r.tensor("Z");
  out.support = r.has("support") ? to_indices(r.read_f64("support"), "support") : support_of(out.z);
  out.window = r.meta().value("window", std::size_t{0});
  out.step = r.meta().value("step", std::size_t{0});
  out.meta = r.meta();
  return out;
}

void write_inference(const fs::path& dir, const InferenceResult& result) {
  ContainerWriter w(dir);
  w.add("estimate", result.estimate);
  w.add("se", result.se);
  w.add("t_stat", result.t_stat);
  const auto support = to_doubles(result.support);
  w.add("support", {support.size()}, support.data());
  const auto degenerate = to_doubles(result.degenerate);
  w.add("degenerate", {degenerate.size()}, degenerate.data());
  auto& meta = w.meta();
  meta["kind"] = "inference";
  meta["method"] = result.method;
  meta["B"] = result.B;
  meta["seed"] = result.seed;
  meta["degenerate_se"] = result.degenerate_se();
  meta["replicate_lambda2"] = result.replicate_lambda2;
  w.finish();
}

InferenceResult read_inference(const fs::path& dir) {
  if (!fs::exists(dir / kManifest))
    throw IoError("", "inference artifact " + (dir / kManifest).string() + " is missing");
  const ContainerReader r(dir);
  if (r.meta().value("kind", "") != "inference") throw IoError("", dir.string() + " is not an inference container");
  InferenceResult out;
  out.method = r.meta().value("method", "");
  out.estimate = r.tensor("estimate");
  out.se = r.tensor("se");
  out.t_stat = r.tensor("t_stat");
  if (!out.se.same_shape(out.estimate)) throw IoError("se", "shape differs from the estimate");
  if (!out.t_stat.same_shape(out.estimate)) throw IoError("t_stat", "shape differs from the estimate");
  out.support = to_indices(r.read_f64("support"), "support");
  out.degenerate = to_indices(r.read_f64("degenerate"), "degenerate");
  out.B = r.meta().value("B", std::size_t{0});
  out.seed = r.meta().value("seed", std::uint64_t{0});
  out.replicate_lambda2 = r.meta().value("replicate_lambda2", std::vector<double>{});
  return out;
}

}  // namespace stftr
