#include "amm_doctest.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "amm/commands.hpp"
#include "amm/data.hpp"
#include "amm/errors.hpp"
#include "amm/trainer.hpp"
#include "helpers.hpp"

using namespace amm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Runs the amm tool with `args`, optionally under an AMM_LOG value.
Run amm_tool(const fs::path& dir, const std::string& args, const std::string& log = "error") {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  std::string cmd = "AMM_LOG='" + log + "' '" + std::string(AMM_TOOL) + "' " + args + " >'" +
                    out.string() + "' 2>'" + err.string() + "'";
  Run r;
  int raw = std::system(cmd.c_str());
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const char* kSmallRun = R"(model:
  K: 3
  L: 2
  placement: {kind: circle, radius: 3}
  encoder: {kind: dense, hidden: [32, 32]}
  decoder: {kind: dense, hidden: [32, 32], output: linear}
  discriminator: {kind: dense, hidden: [32, 32]}
optim:
  batch_size: 50
  lambda: 1.0
  max_steps: 200
  seed: 3
data:
  kind: synthetic
  synthetic: {per_component: 100, test_per_component: 50, dim: 2, separation: 6.0, seed: 0}
  split: {validation: 30, seed: 0}
eval:
  every: 100
  checkpoint_every: 100
)";

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto path = dir / "run.yaml";
  std::ofstream(path) << text;
  return path;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double field(const std::string& text, const std::string& key) {
  auto at = text.find(key + "=");
  REQUIRE(at != std::string::npos);
  return std::stod(text.substr(at + key.size() + 1));
}

}  // namespace

TEST_CASE("train writes checkpoints and metrics, and eval reports errors in [0,1]") {
  auto dir = testing::scratch_dir("cli_smoke");
  auto config = write_config(dir, kSmallRun);
  auto out = dir / "run";
  auto r = amm_tool(dir, "train --config '" + config.string() + "' --out '" + out.string() + "'");
  INFO(r.err);
  REQUIRE(r.status == 0);
  CHECK(fs::exists(out / "final.pt"));
  CHECK(fs::exists(out / "checkpoint_100.pt"));
  CHECK(fs::exists(out / "checkpoint_200.pt"));
  CHECK(fs::exists(out / "best.pt"));

  auto rows = lines_of(slurp(out / "metrics.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == kMetricsHeader);
  CHECK(rows[1].rfind("100,", 0) == 0);
  CHECK(rows[2].rfind("200,", 0) == 0);

  auto e = amm_tool(dir, "eval --config '" + config.string() + "' --out '" + out.string() + "'");
  REQUIRE(e.status == 0);
  for (auto key : {"cluster_error", "classification_error", "bayes_error", "bayes_agreement"}) {
    double v = field(e.out, key);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(fs::exists(out / "eval.csv"));
}

TEST_CASE("eval works on a checkpoint taken before any training") {
  auto dir = testing::scratch_dir("cli_untrained");
  std::string text = kSmallRun;
  text.replace(text.find("max_steps: 200"), 14, "max_steps: 0");
  auto config = write_config(dir, text);
  auto out = dir / "run";
  auto r = amm_tool(dir, "train --config '" + config.string() + "' --out '" + out.string() + "'");
  INFO(r.err);
  REQUIRE(r.status == 0);
  auto e = amm_tool(dir, "eval --config '" + config.string() + "' --out '" + out.string() + "'");
  REQUIRE(e.status == 0);
  CHECK(field(e.out, "step") == 0);
  double err = field(e.out, "cluster_error");
  CHECK(err >= 0.0);
  CHECK(err <= 1.0);
}

TEST_CASE("semi-supervised training without labeled examples is a configuration error") {
  auto dir = testing::scratch_dir("cli_samm");
  auto config = write_config(dir, kSmallRun);
  auto r = amm_tool(dir, "train --mode samm --config '" + config.string() + "' --out '" +
                             (dir / "run").string() + "'");
  CHECK(r.status != 0);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(r.err.find("label") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "run" / "final.pt"));
}

TEST_CASE("bad invocations exit nonzero") {
  auto dir = testing::scratch_dir("cli_bad");
  auto config = write_config(dir, kSmallRun);
  CHECK(amm_tool(dir, "").status != 0);
  CHECK(amm_tool(dir, "frobnicate").status != 0);
  CHECK(amm_tool(dir, "train --config '" + (dir / "absent.yaml").string() + "'").status != 0);
  CHECK(amm_tool(dir, "train --mode both --config '" + config.string() + "'").status != 0);
  auto r = amm_tool(dir, "eval --config '" + config.string() + "' --out '" +
                             (dir / "empty").string() + "'");
  CHECK(r.status != 0);
  CHECK(r.err.find("checkpoint") != std::string::npos);

  auto log = amm_tool(dir, "eval --config '" + config.string() + "'", "verbose");
  CHECK(log.status != 0);
  CHECK(log.err.find("AMM_LOG") != std::string::npos);
}

TEST_CASE("read_pixel_csv maps channel-last rows and label 10 to digit 0") {
  auto dir = testing::scratch_dir("cli_csv");
  {
    std::ofstream out(dir / "px.csv");
    out << "# label then 2x1x3 pixels\n";
    out << "10,255,0,0,0,0,255\n";
    out << "\n";
    out << "3,0,51,102,153,204,255\n";
  }
  auto d = read_pixel_csv(dir / "px.csv", 2, 1, 3);
  CHECK(d.images.sizes() == torch::IntArrayRef{2, 3, 2, 1});
  CHECK(testing::to_vector(*d.labels) == std::vector<int64_t>{0, 3});
  // Channel c of pixel p comes from column 1 + 3p + c.
  CHECK(d.images[0][0][0][0].item<double>() == 1.0);
  CHECK(d.images[0][2][1][0].item<double>() == 1.0);
  CHECK(d.images[1][1][0][0].item<double>() == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(d.images[1][0][1][0].item<double>() == doctest::Approx(0.6).epsilon(1e-12));

  std::ofstream(dir / "wide.csv") << "1,0,0\n";
  CHECK_THROWS_AS(read_pixel_csv(dir / "wide.csv", 2, 1, 3), FormatError);
  std::ofstream(dir / "hot.csv") << "1,0,0,0,0,0,256\n";
  CHECK_THROWS_AS(read_pixel_csv(dir / "hot.csv", 2, 1, 3), FormatError);
  std::ofstream(dir / "word.csv") << "1,0,x,0,0,0,0\n";
  CHECK_THROWS_AS(read_pixel_csv(dir / "word.csv", 2, 1, 3), FormatError);
  std::ofstream(dir / "label.csv") << "11,0,0,0,0,0,0\n";
  CHECK_THROWS_AS(read_pixel_csv(dir / "label.csv", 2, 1, 3), FormatError);
  CHECK_THROWS_AS(read_pixel_csv(dir / "absent.csv", 2, 1, 3), IoError);
  CHECK_THROWS_AS(read_pixel_csv(dir / "px.csv", 0, 1, 3), ArgumentError);
}

TEST_CASE("convert-data turns a pixel CSV into a raw container") {
  auto dir = testing::scratch_dir("cli_convert");
  {
    std::ofstream out(dir / "px.csv");
    out << "10,255,0,0,0,0,255\n";
    out << "7,1,2,3,4,5,6\n";
  }
  auto raw = dir / "out" / "px.raw";
  auto r = amm_tool(dir, "convert-data --input '" + (dir / "px.csv").string() +
                             "' --height 2 --width 1 --channels 3 --out '" + raw.string() + "'");
  INFO(r.err);
  REQUIRE(r.status == 0);
  CHECK(r.out.find("wrote 2 examples") != std::string::npos);
  auto back = load_raw_rgb(raw);
  auto direct = read_pixel_csv(dir / "px.csv", 2, 1, 3);
  CHECK(testing::bitwise_equal(back.images, direct.images));
  CHECK(torch::equal(*back.labels, *direct.labels));

  auto idx = amm_tool(dir, "convert-data --format idx --input '" + (dir / "px.csv").string() +
                               "' --out '" + raw.string() + "'");
  CHECK(idx.status != 0);
}
