#include "pcflow/model_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace pcflow {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>(bits & 0xFFu);
    bits >>= 8;
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError("model file is truncated");
  }
  U bits = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) bits = (bits << 8) | bytes[i];
  return std::bit_cast<T>(bits);
}

void put_matrix(std::ostream& out, const MatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) put_le(out, m(r, c));
}

MatrixXd get_matrix(std::istream& in, Index rows, Index cols) {
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = get_le<double>(in);
  return m;
}

void put_vector(std::ostream& out, const VectorXd& v) {
  for (Index i = 0; i < v.size(); ++i) put_le(out, v(i));
}

VectorXd get_vector(std::istream& in, Index n) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = get_le<double>(in);
  return v;
}

// Guards allocations against corrupted size fields.
Index get_size(std::istream& in, std::uint64_t limit = 1u << 24) {
  const auto n = get_le<std::uint64_t>(in);
  if (n > limit) throw FormatError("model file has an implausible dimension");
  return static_cast<Index>(n);
}

void put_net(std::ostream& out, const DenseNet<double>& net) {
  put_le(out, net.output_cap);
  put_le<std::uint64_t>(out, net.layers.size());
  for (const auto& layer : net.layers) {
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(layer.weight.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(layer.weight.cols()));
    put_matrix(out, layer.weight);
    put_vector(out, layer.bias);
  }
}

DenseNet<double> get_net(std::istream& in) {
  DenseNet<double> net;
  net.output_cap = get_le<double>(in);
  const Index n_layers = get_size(in, 1024);
  if (n_layers < 1) throw FormatError("conditioner without layers");
  for (Index l = 0; l < n_layers; ++l) {
    const Index rows = get_size(in);
    const Index cols = get_size(in);
    DenseLayer<double> layer;
    layer.weight = get_matrix(in, rows, cols);
    layer.bias = get_vector(in, rows);
    if (!net.layers.empty() && net.layers.back().weight.rows() != cols) {
      throw FormatError("conditioner layer shapes do not chain");
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace

void write_model(std::ostream& out, const FlowModel<double>& model) {
  out.write(kModelMagic, sizeof(kModelMagic));
  put_le(out, kModelMajorVersion);
  put_le(out, kModelMinorVersion);
  put_le<std::uint32_t>(out, model.pca ? 1u : 0u);
  put_le<std::uint32_t>(out, 0u);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.data_dim));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.flow_dim()));
  if (model.pca) {
    const auto& pca = *model.pca;
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(pca.dim()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(pca.latent_dim()));
    put_le(out, pca.cev);
    put_vector(out, pca.mean);
    put_vector(out, pca.singular_values);
    put_matrix(out, pca.components);
  }
  put_vector(out, model.standardizer.shift);
  put_vector(out, model.standardizer.scale);
  put_le<std::uint64_t>(out, model.layers.size());
  for (const auto& layer : model.layers) {
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(layer.dim));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(layer.split));
    put_le<std::uint32_t>(out, layer.swapped ? 1u : 0u);
    put_le<std::uint32_t>(out, 0u);
    put_net(out, layer.scale_net);
    put_net(out, layer.shift_net);
  }
  if (!out) throw FormatError("failed writing model");
}

FlowModel<double> read_model(std::istream& in) {
  char magic[sizeof(kModelMagic)] = {};
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw FormatError("not a model file (bad magic bytes)");
  }
  const auto major = get_le<std::uint32_t>(in);
  get_le<std::uint32_t>(in);  // minor versions are backward compatible
  if (major != kModelMajorVersion) {
    throw FormatError("unsupported model format version " + std::to_string(major));
  }
  const auto flags = get_le<std::uint32_t>(in);
  get_le<std::uint32_t>(in);

  FlowModel<double> model;
  model.data_dim = get_size(in);
  const Index flow_dim = get_size(in);
  if (flags & 1u) {
    PcaMap<double> pca;
    const Index d = get_size(in);
    const Index m = get_size(in);
    if (d != model.data_dim || m != flow_dim || m < 1 || m > d) {
      throw FormatError("PCA block dimensions are inconsistent");
    }
    pca.cev = get_le<double>(in);
    pca.mean = get_vector(in, d);
    pca.singular_values = get_vector(in, d);
    pca.components = get_matrix(in, d, m);
    model.pca = std::move(pca);
  } else if (flow_dim != model.data_dim) {
    throw FormatError("flow dimension differs from data dimension without PCA");
  }
  model.standardizer.shift = get_vector(in, flow_dim);
  model.standardizer.scale = get_vector(in, flow_dim);
  if ((model.standardizer.scale.array() <= 0.0).any()) {
    throw FormatError("standardizer scale must be positive");
  }
  const Index k = get_size(in, 4096);
  for (Index i = 0; i < k; ++i) {
    CouplingLayer<double> layer;
    layer.dim = get_size(in);
    layer.split = get_size(in);
    layer.swapped = get_le<std::uint32_t>(in) != 0;
    get_le<std::uint32_t>(in);
    layer.scale_net = get_net(in);
    layer.shift_net = get_net(in);
    if (layer.dim != flow_dim || layer.split < 1 || layer.split >= layer.dim ||
        layer.scale_net.input_dim() != layer.identity_size() ||
        layer.scale_net.output_dim() != layer.active_size() ||
        layer.shift_net.input_dim() != layer.identity_size() ||
        layer.shift_net.output_dim() != layer.active_size()) {
      throw FormatError("coupling layer shapes are inconsistent");
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

void save_model(const FlowModel<double>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_model(out, model);
}

FlowModel<double> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_model(in);
}

ScenarioSet sample_scenarios(const FlowModel<double>& model, Index n, std::uint64_t seed,
                             const ScenarioSet& like) {
  Rng rng = SeedStreams{seed}.sampling();
  ScenarioSet out;
  out.data = sample(model, n, rng).transpose();
  out.period_length = model.data_dim;
  out.interval_minutes = like.interval_minutes;
  out.scaling = like.scaling;
  out.min = like.min;
  out.max = like.max;
  out.capacity_reference = like.capacity_reference;
  out.generated = true;
  return out;
}

}  // namespace pcflow
