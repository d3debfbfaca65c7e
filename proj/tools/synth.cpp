// Writes a synthetic two-class JSONL corpus (train/dev/test) for trying
// out strategies without a real dataset.

#include <CLI11.hpp>
#include <fmt/format.h>

#include "alsim/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic corpus generator"};
  std::string out;
  std::uint64_t seed = 7;
  alsim::SyntheticSpec spec;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--train", spec.train, "Train documents");
  app.add_option("--dev", spec.dev, "Dev documents");
  app.add_option("--test", spec.test, "Test documents");
  app.add_option("--distractor-ratio", spec.distractor_ratio, "Share of distractor tokens");
  CLI11_PARSE(app, argc, argv);

  try {
    alsim::write_jsonl_splits(alsim::generate_synthetic(spec, seed), out);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  fmt::print("wrote {} / {} / {} documents to {}\n", spec.train, spec.dev, spec.test, out);
  return 0;
}
