#include "gnnr/padding.hpp"

#include <algorithm>
#include <numeric>

#include "gnnr/errors.hpp"
#include "gnnr/program.hpp"
#include "gnnr/rng.hpp"
#include "gnnr/training.hpp"
#include "json_util.hpp"

namespace gnnr {

using detail::json;

std::string_view to_string(PadPosition p) noexcept {
  switch (p) {
    case PadPosition::front: return "front";
    case PadPosition::center: return "center";
    case PadPosition::end: return "end";
    case PadPosition::random: return "random";
  }
  return "?";
}

PadPosition parse_pad_position(std::string_view name) {
  if (name == "front") return PadPosition::front;
  if (name == "center") return PadPosition::center;
  if (name == "end") return PadPosition::end;
  if (name == "random") return PadPosition::random;
  throw ValidationError("unknown padding position '" + std::string(name) + "'");
}

std::vector<std::size_t> PaddingSpec::layout() const {
  const std::size_t total = raw_dim + pad_size;
  std::vector<std::size_t> dest(total);
  switch (position) {
    case PadPosition::end:
      std::iota(dest.begin(), dest.end(), 0);
      break;
    case PadPosition::front:
      for (std::size_t j = 0; j < raw_dim; ++j) dest[j] = pad_size + j;
      for (std::size_t k = 0; k < pad_size; ++k) dest[raw_dim + k] = k;
      break;
    case PadPosition::center: {
      const std::size_t half = raw_dim / 2;
      for (std::size_t j = 0; j < raw_dim; ++j) dest[j] = j < half ? j : j + pad_size;
      for (std::size_t k = 0; k < pad_size; ++k) dest[raw_dim + k] = half + k;
      break;
    }
    case PadPosition::random: {
      std::iota(dest.begin(), dest.end(), 0);
      auto rng = substream(seed, "padding/position");
      shuffle(std::span<std::size_t>(dest), rng);
      break;
    }
  }
  return dest;
}

std::vector<std::size_t> PaddingSpec::padding_columns() const {
  const auto dest = layout();
  std::vector<std::size_t> cols(dest.begin() + static_cast<std::ptrdiff_t>(raw_dim), dest.end());
  std::sort(cols.begin(), cols.end());
  return cols;
}

void PaddingSpec::validate() const {
  if (delta.size() != pad_size || (pad_size > 0 && delta.rows() != 1)) {
    throw ValidationError("delta: expected 1x" + std::to_string(pad_size) + ", got " +
                          to_string(delta.shape()));
  }
  if (!delta.all_finite()) throw ValidationError("delta: contains NaN or Inf");
  if (!(init_std >= 0.0)) throw ValidationError("init_std: must be >= 0");
}

std::size_t required_pad_size(std::size_t pretrained_dim, std::size_t downstream_dim) {
  if (downstream_dim > pretrained_dim) {
    throw ValidationError("downstream feature dim " + std::to_string(downstream_dim) +
                          " exceeds pre-trained input dim " + std::to_string(pretrained_dim) +
                          "; padding cannot shrink features");
  }
  return pretrained_dim - downstream_dim;
}

PaddingSpec make_padding(std::size_t raw_dim, std::size_t target_dim, PadPosition position,
                         std::uint64_t seed, double init_std) {
  PaddingSpec spec;
  spec.raw_dim = raw_dim;
  spec.pad_size = required_pad_size(target_dim, raw_dim);
  spec.position = position;
  spec.seed = seed;
  spec.init_std = init_std;
  spec.delta = Tensor(1, spec.pad_size);
  auto rng = substream(seed, "padding");
  for (auto& v : spec.delta.data()) v = init_std * rng.normal();
  spec.validate();
  return spec;
}

PaddingSpec zero_padding(std::size_t raw_dim, std::size_t target_dim, PadPosition position,
                         std::uint64_t seed) {
  return make_padding(raw_dim, target_dim, position, seed, 0.0);
}

Tensor apply_padding(const Tensor& x, const PaddingSpec& spec) {
  if (x.cols() != spec.raw_dim) {
    throw ShapeError("apply_padding: expected " + std::to_string(spec.raw_dim) + " raw columns, got " +
                     std::to_string(x.cols()));
  }
  spec.validate();
  if (spec.pad_size == 0) return x;
  const auto dest = spec.layout();
  Tensor out(x.rows(), spec.raw_dim + spec.pad_size);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < spec.raw_dim; ++j) out(r, dest[j]) = x(r, j);
    for (std::size_t k = 0; k < spec.pad_size; ++k) out(r, dest[spec.raw_dim + k]) = spec.delta[k];
  }
  return out;
}

Graph apply_padding(const Graph& g, const PaddingSpec& spec) {
  Graph out = g;
  out.features = apply_padding(g.features, spec);
  return out;
}

PaddingResult optimize_padding(const FrozenModel& model, const GraphDataset& ds, const PaddingSpec& spec,
                               const LossSpec& loss, const ReprogramOptions& opt) {
  const HashGuard guard(model, "optimize_padding");
  spec.validate();
  if (ds.feat_dim() != spec.raw_dim) {
    throw ValidationError("optimize_padding: dataset feat_dim=" + std::to_string(ds.feat_dim()) +
                          " but padding raw_dim=" + std::to_string(spec.raw_dim));
  }
  require_input_dim(model.params(), spec.raw_dim + spec.pad_size);

  std::vector<PreparedGraph> prepared;
  for (const auto& g : ds.graphs) prepared.push_back(prepare_graph(g, model.params()));

  PaddingResult result;
  result.spec = spec;
  Tensor delta = spec.delta;
  result.losses = descend(delta, opt, "optimize_padding", [&](Tape& tape, const Var& d) {
    const BoundModel bound = bind(tape, model.params(), false);
    TapeProgram program;
    program.padding = &spec;
    program.delta = d;
    return dataset_loss(tape, ds, Split::train, loss, [&](Tape& t, std::size_t i) {
      return program_forward(t, bound, prepared[i], program);
    });
  });
  result.spec.delta = std::move(delta);
  guard.verify();
  return result;
}

Tensor infer_with_padding(const FrozenModel& model, const Graph& g, const PaddingSpec& spec) {
  Reprogramming r;
  r.padding = &spec;
  return reprogrammed_forward(model, g, r);
}

std::string padding_to_json(const PaddingSpec& spec) {
  const json j{{"raw_dim", spec.raw_dim},
               {"pad_size", spec.pad_size},
               {"position", std::string(to_string(spec.position))},
               {"seed", spec.seed},
               {"init_std", spec.init_std},
               {"delta", spec.delta.data()},
               {"layout", spec.layout()}};
  return j.dump();
}

PaddingSpec padding_from_json(std::string_view text) {
  const json j = detail::parse_json(text);
  PaddingSpec spec;
  spec.raw_dim = detail::field<std::size_t>(j, "raw_dim");
  spec.pad_size = detail::field<std::size_t>(j, "pad_size");
  spec.position = parse_pad_position(detail::field<std::string>(j, "position"));
  spec.seed = detail::field_or<std::uint64_t>(j, "seed", 0);
  spec.init_std = detail::field_or<double>(j, "init_std", 0.01);
  spec.delta = Tensor::row_vector(detail::field<std::vector<double>>(j, "delta"));
  spec.validate();
  return spec;
}

}  // namespace gnnr
