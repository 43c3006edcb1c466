#include "tcape/synthetic.hpp"

#include <cmath>

#include "tcape/error.hpp"
#include "tcape/featio.hpp"
#include "tcape/prompt.hpp"
#include "tcape/rng.hpp"

namespace tcape {

namespace {

std::vector<double> unit_direction(CounterRng rng, std::size_t dim) {
  std::vector<double> d(dim);
  double n = 0.0;
  for (auto& x : d) {
    x = rng.normal();
    n += x * x;
  }
  for (auto& x : d) x /= std::sqrt(n);
  return d;
}

}  // namespace

void generate_synthetic(const std::filesystem::path& out_dir, const SyntheticOptions& opts) {
  if (opts.classes.empty()) throw Error("synthetic: at least one anomaly class is required");
  if (opts.min_length < 2 || opts.max_length < opts.min_length) throw Error("synthetic: bad length range");
  if (opts.crops == 0 || opts.dim == 0) throw Error("synthetic: crops and dim must be positive");
  std::filesystem::create_directories(out_dir / "features");

  const CounterRng root(opts.seed);
  std::vector<std::vector<double>> directions;
  for (std::size_t c = 0; c < opts.classes.size(); ++c)
    directions.push_back(unit_direction(root.fork(100 + c), opts.dim));

  featio::Manifest manifest;
  auto make = [&](std::size_t index, featio::Split split, bool abnormal, std::size_t cls_index) {
    CounterRng rng = root.fork(1000 + index);
    const std::size_t t_len = opts.min_length + rng.below(opts.max_length - opts.min_length + 1);
    std::vector<std::uint8_t> active(t_len, 0);
    if (abnormal) {
      for (std::size_t s = 0; s < opts.segments; ++s) {
        const std::size_t len = std::min(t_len, std::max<std::size_t>(2, t_len / 8 + rng.below(t_len / 4 + 1)));
        const std::size_t lo = rng.below(t_len - len + 1);
        for (std::size_t t = lo; t < lo + len; ++t) active[t] = 1;
      }
    }
    Tensor feats({opts.crops, t_len, opts.dim});
    for (std::size_t c = 0; c < opts.crops; ++c) {
      std::vector<double> drift(opts.dim);
      for (auto& s : drift) s = rng.normal() * opts.drift / std::sqrt(1.0 - opts.ar_coeff * opts.ar_coeff);
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t d = 0; d < opts.dim; ++d) {
          drift[d] = opts.ar_coeff * drift[d] + opts.drift * rng.normal();
          double v = drift[d] + opts.noise * rng.normal();
          if (active[t]) v += opts.amplitude * directions[cls_index][d];
          feats[(c * t_len + t) * opts.dim + d] = v;
        }
      }
    }
    const std::string split_name = split == featio::Split::train ? "train" : "test";
    const std::string id = split_name + "_" + std::to_string(index) + (abnormal ? "_abn" : "_nrm");
    const std::filesystem::path rel = std::filesystem::path("features") / (id + ".tfv");
    featio::write_tensor(out_dir / rel, opts.crops == 1 ? feats.reshaped({t_len, opts.dim}) : feats,
                         featio::Dtype::f32);

    featio::VideoRecord rec;
    rec.id = id;
    rec.features = rel;
    rec.label = abnormal ? 1 : 0;
    rec.classes = {abnormal ? opts.classes[cls_index] : featio::kNormalClass};
    rec.split = split;
    if (split == featio::Split::test) {
      std::vector<std::uint8_t> frames(t_len * featio::kFramesPerSnippet, 0);
      for (std::size_t f = 0; f < frames.size(); ++f) frames[f] = active[f / featio::kFramesPerSnippet];
      rec.frames = std::move(frames);
    }
    manifest.videos.push_back(std::move(rec));
  };

  std::size_t index = 0;
  for (const auto& [count, split] : {std::pair{opts.train_videos, featio::Split::train},
                                    std::pair{opts.test_videos, featio::Split::test}}) {
    for (std::size_t i = 0; i < count; ++i, ++index) {
      const bool abnormal = i % 2 == 0;
      make(index, split, abnormal, (i / 2) % opts.classes.size());
    }
  }
  manifest.save(out_dir / "manifest.jsonl");

  prompt::PromptBank bank;
  bank.dim = opts.prompt_dim;
  bank.provenance = "stub_embedder";
  bank.mode = prompt::Template::label;
  for (const auto& c : opts.classes) bank.vectors[c] = prompt::stub_embed(c, opts.prompt_dim);
  bank.vectors[featio::kNormalClass] = prompt::stub_embed(featio::kNormalClass, opts.prompt_dim);
  bank.save(out_dir / "prompts.json");
}

}  // namespace tcape
