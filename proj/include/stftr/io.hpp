#pragma once

// On-disk containers: a directory holding manifest.json plus one raw
// little-endian, row-major binary file per array. Readers never infer a shape
// from a file size; every mismatch raises IoError naming the array.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "stftr/bootstrap.hpp"
#include "stftr/dataset.hpp"
#include "stftr/pipeline.hpp"
#include "stftr/simulator.hpp"
#include "stftr/tensor.hpp"

namespace stftr {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum class ElementType { f64, c128 };
std::string_view element_type_name(ElementType type);
std::size_t element_size(ElementType type);

struct ArrayInfo {
  std::string name;
  std::string file;
  std::vector<std::size_t> shape;
  ElementType type = ElementType::f64;

  std::size_t count() const;
};

class ContainerWriter {
 public:
  explicit ContainerWriter(std::filesystem::path dir);

  void add(const std::string& name, std::vector<std::size_t> shape, const double* data);
  void add(const std::string& name, std::vector<std::size_t> shape, const cplx* data);
  void add(const std::string& name, const RowMatrix& a);
  void add(const std::string& name, const CoefTensor& z);
  // Stack of equally shaped matrices as a (count x rows x cols) array.
  void add(const std::string& name, const std::vector<RowMatrix>& stack);

  // Free-form metadata stored in the manifest under "meta".
  Json& meta() { return meta_; }

  // Writes manifest.json. Arrays are already on disk.
  void finish();

 private:
  void write_raw(const ArrayInfo& info, const void* data);

  std::filesystem::path dir_;
  std::vector<ArrayInfo> arrays_;
  Json meta_ = Json::object();
  bool finished_ = false;
};

class ContainerReader {
 public:
  // Parses and validates the manifest, including file byte lengths.
  explicit ContainerReader(std::filesystem::path dir);

  bool has(const std::string& name) const;
  const ArrayInfo& info(const std::string& name) const;
  const std::vector<ArrayInfo>& arrays() const { return arrays_; }
  const Json& meta() const { return meta_; }
  const std::filesystem::path& dir() const { return dir_; }

  std::vector<double> read_f64(const std::string& name) const;
  std::vector<cplx> read_c128(const std::string& name) const;
  RowMatrix matrix(const std::string& name) const;
  CoefTensor tensor(const std::string& name) const;
  std::vector<RowMatrix> stack(const std::string& name) const;

 private:
  void read_raw(const ArrayInfo& info, void* out) const;

  std::filesystem::path dir_;
  std::vector<ArrayInfo> arrays_;
  Json meta_;
};

// Recordings plus, for simulated data, the ground truth needed to score fits.
struct StoredDataset {
  TrialDataset data;
  std::optional<CoefTensor> z_true;
  std::vector<RowMatrix> noiseless_sources;  // empty when not simulated
  std::optional<RowMatrix> noise_covariance;
  Json spec;  // simulation spec, null for external data
};

void write_dataset(const std::filesystem::path& dir, const TrialDataset& data, const GroundTruth* truth,
                   const Json& spec);
StoredDataset read_dataset(const std::filesystem::path& dir);

// Data handed to the fitting code: prewhitened when a nonzero noise
// covariance is stored and the recordings are not already whitened.
TrialDataset fitting_data(const StoredDataset& stored);

// Fitted coefficients and everything needed to rerun inference on them.
struct StoredFit {
  std::string method;
  CoefTensor z;
  std::vector<std::size_t> support;
  std::size_t window = 0, step = 0;
  Json meta;
};

void write_fit(const std::filesystem::path& dir, const StftrFit& fit, const StftDictionary& dict);
void write_fit(const std::filesystem::path& dir, const MnerFit& fit, const StftDictionary& dict);
StoredFit read_fit(const std::filesystem::path& dir);

void write_inference(const std::filesystem::path& dir, const InferenceResult& result);
InferenceResult read_inference(const std::filesystem::path& dir);

std::vector<double> to_doubles(const std::vector<std::size_t>& v);
std::vector<std::size_t> to_indices(const std::vector<double>& v, const std::string& array);

}  // namespace stftr
