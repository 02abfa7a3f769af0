#include <filesystem>
#include <fstream>
#include <sstream>

#include "testing.hpp"

#include "migan/errors.hpp"
#include "migan/metrics.hpp"
#include "migan_cli/cli.hpp"
#include "migan_cli/config.hpp"

using namespace migan;
namespace fs = std::filesystem;

namespace {

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "migan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

const char* kTinyGmm = R"([run]
name = tiny
[train]
batch_size = 16
steps = 6
lr = 0.001
checkpoint_every = 3
log_every = 0
sample_every = 0
[weights]
lambda_l1 = 0
[network]
image_size = 1
image_channels = 2
z_dim = 2
arch = mlp
mlp_hidden = 16
[data]
kind = cond_gmm
n_samples = 200
n_test = 10
[metrics]
k = 5
n_inputs = 10
codes_per_input = 10
pairs_per_input = 3
)";

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / ("migan_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  fs::path write(const std::string& file, const std::string& text) const {
    std::ofstream(dir / file) << text;
    return dir / file;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing, overrides and unknown keys") {
  auto c = cli::parse_config(kTinyGmm, {"train.steps=42", "weights.lambda_mi=0.5"});
  CHECK(c.name == "tiny");
  CHECK(c.train.steps == 42);
  CHECK(c.train.weights.lambda_mi == 0.5);
  CHECK(c.train.spec.arch == Architecture::mlp);
  CHECK(c.data.kind == "cond_gmm");
  CHECK(c.metrics.k == 5);

  auto again = cli::parse_config(cli::to_ini(c));
  CHECK(cli::flatten(again) == cli::flatten(c));

  CHECK_THROWS_AS(cli::parse_config("[train]\nstepz = 3\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("[optim]\nlr = 3\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("[train]\nsteps = many\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(kTinyGmm, {"train.steps"}), ConfigError);
  CHECK_THROWS_AS(cli::validate(cli::parse_config(kTinyGmm, {"network.arch=conv"})), std::exception);
}

TEST_CASE("shipped configs parse") {
  for (auto name : {"shapes_colors.ini", "cond_gmm.ini", "unpaired_shapes.ini"}) {
    auto path = fs::path(MIGAN_SOURCE_DIR) / "configs" / name;
    CHECK_NOTHROW(cli::validate(cli::load_config(path)));
  }
}

TEST_CASE("usage errors exit 2") {
  Workspace ws("usage");
  CHECK(invoke({}) == cli::kExitUsage);
  CHECK(invoke({"frobnicate"}) == cli::kExitUsage);
  CHECK(invoke({"--help"}) == cli::kExitOk);
  CHECK(invoke({"train", "--config", (ws.dir / "absent.ini").string()}) == cli::kExitUsage);
  auto bad = ws.write("bad.ini", "[train]\nbogus = 1\n");
  CHECK(invoke({"train", "--config", bad.string()}) == cli::kExitUsage);
  auto folder = ws.write("folder.ini", "[data]\nkind = folder\nroot = " + (ws.dir / "nowhere").string() + "\n");
  CHECK(invoke({"train", "--config", folder.string(), "-o", (ws.dir / "run").string()}) == cli::kExitUsage);
}

TEST_CASE("train, eval, sample and resume from the command line") {
  Workspace ws("pipeline");
  auto cfg = ws.write("tiny.ini", kTinyGmm);
  auto run = ws.dir / "run";
  REQUIRE(invoke({"train", "-c", cfg.string(), "-o", run.string()}) == cli::kExitOk);
  for (auto f : {"config.ini", "losses.csv", "mi_trace.csv", "checkpoints/step3.ckpt", "checkpoints/final.ckpt"}) {
    CHECK_MESSAGE(fs::exists(run / f), f);
  }
  auto final_ckpt = (run / "checkpoints" / "final.ckpt").string();

  REQUIRE(invoke({"eval", final_ckpt}) == cli::kExitOk);
  auto reports = reports_from_json(slurp(run / "metrics.json"));
  std::vector<std::string> names;
  for (const auto& r : reports) names.push_back(r.metric);
  CHECK((names == std::vector<std::string>{"fid_proxy", "ndb", "jsd", "diversity"}));
  CHECK(reports[1].protocol.k == 5);

  CHECK(invoke({"eval", final_ckpt, "--set", "network.z_dim=3"}) == cli::kExitUsage);
  CHECK(invoke({"eval", (ws.dir / "nope.ckpt").string()}) == cli::kExitUsage);

  auto scatter = ws.dir / "points.png";
  CHECK(invoke({"sample", final_ckpt, "--n-codes", "4", "-o", scatter.string()}) == cli::kExitOk);
  CHECK(fs::exists(scatter));
  CHECK(fs::exists(ws.dir / "points.csv"));
  CHECK(invoke({"interpolate", final_ckpt, "-o", (ws.dir / "i.png").string()}) == cli::kExitUsage);

  REQUIRE(invoke({"train", "-c", cfg.string(), "-o", run.string(), "--set", "train.steps=9", "--resume",
                  (run / "checkpoints" / "step3.ckpt").string()}) == cli::kExitOk);
  std::ifstream trace(run / "mi_trace.csv");
  std::string line;
  std::int64_t lines = 0;
  while (std::getline(trace, line)) ++lines;
  // 6 from the first run, 6 more after resuming at step 3
  CHECK(lines == 1 + 6 + 6);

  CHECK(invoke({"plot", (run / "mi_trace.csv").string(), "--column", "estimate", "--reference", "-1.386294",
                "-o", (ws.dir / "trace.png").string()}) == cli::kExitOk);
  CHECK(fs::exists(ws.dir / "trace.png"));
}

TEST_CASE("image models support sample and interpolate") {
  Workspace ws("images");
  auto cfg = ws.write("img.ini", "[train]\nbatch_size = 4\nsteps = 1\nlog_every = 0\nsample_every = 0\n"
                                 "checkpoint_every = 0\n[network]\nimage_size = 16\nbase_width = 4\n"
                                 "z_dim = 4\n[data]\nn_shapes = 8\nn_test = 3\n");
  auto run = ws.dir / "run";
  REQUIRE(invoke({"train", "-c", cfg.string(), "-o", run.string()}) == cli::kExitOk);
  auto ckpt = (run / "checkpoints" / "final.ckpt").string();
  CHECK(invoke({"sample", ckpt, "--n-codes", "3", "-o", (ws.dir / "g.png").string()}) == cli::kExitOk);
  CHECK(invoke({"interpolate", ckpt, "--steps", "5", "-o", (ws.dir / "i.png").string()}) == cli::kExitOk);
  CHECK(invoke({"interpolate", ckpt, "--steps", "1", "-o", (ws.dir / "i.png").string()}) == cli::kExitUsage);
  CHECK(fs::exists(ws.dir / "g.png"));
  CHECK(fs::exists(ws.dir / "i.png"));
}

TEST_CASE("mi-bench writes one row per rho, seed and estimator") {
  Workspace ws("bench");
  REQUIRE(invoke({"mi-bench", "--rhos", "0,0.9", "--seeds", "0", "--steps", "50", "--batch", "64", "-o",
                  ws.dir.string()}) == cli::kExitOk);
  std::ifstream in(ws.dir / "mi_bench.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "rho,seed,estimator,estimate,analytic_mi");
  std::int64_t rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
  CHECK(invoke({"mi-bench", "--rhos", "1.5", "-o", ws.dir.string()}) == cli::kExitUsage);
}
