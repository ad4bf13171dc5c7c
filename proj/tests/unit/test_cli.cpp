#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "motorfm/dataio.hpp"
#include "oracles.hpp"

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(MOTORFM_EXE) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const char* kSynth = R"({"classes":[{"fault_kind":"normal"},
  {"fault_kind":"inter_turn","fault_ratio":50},{"fault_kind":"inter_coil","fault_ratio":50}],
  "per_class":4,"duration":4,"noise_sigma":0.05,"seed":1})";

}  // namespace

TEST_CASE("end-to-end command line workflow") {
  oracle::TempDir dir("cli");
  const auto d = dir.path().string();
  std::ofstream(dir / "synth.json") << kSynth;

  auto r = cli("--out-dir " + d + "/data synth --config " + d + "/synth.json");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(std::filesystem::exists(dir / "data/manifest.json"));
  CHECK(std::filesystem::exists(dir / "data/rec_00011.srec"));

  r = cli("--seed 2 --out-dir " + d + "/win window --manifest " + d + "/data/manifest.json");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const auto members = slurp(dir / "win/test_members.csv");
  r = cli("--seed 2 --out-dir " + d + "/win2 window --manifest " + d + "/data/manifest.json");
  CHECK(slurp(dir / "win2/test_members.csv") == members);
  CHECK(slurp(dir / "win2/train.wnds") == slurp(dir / "win/train.wnds"));

  for (const char* ex : {"stat", "raw"}) {
    for (const char* split : {"train", "test"}) {
      r = cli("extract --dataset " + d + "/win/" + split + ".wnds --extractor " + ex + " --out " + d + "/" +
                  ex + "_" + split + ".fbnd");
      REQUIRE_MESSAGE(r.code == 0, r.out);
    }
  }
  const auto stat_train = motorfm::read_bundle(dir / "stat_train.fbnd");
  CHECK(stat_train.dim() == 32);
  CHECK(stat_train.extractor_id == "stat");

  r = cli("assess --bundles " + d + "/stat_train.fbnd " + d + "/raw_train.fbnd --report " + d + "/assess.json");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const auto assess = nlohmann::json::parse(slurp(dir / "assess.json"));
  CHECK(assess.at("columns").size() == 3);
  CHECK(std::filesystem::exists(dir / "assess.csv"));

  r = cli("assess --bundles " + d + "/stat_train.fbnd " + d + "/raw_test.fbnd --report " + d + "/bad.json");
  CHECK(r.code == 1);

  r = cli("probe --train " + d + "/stat_train.fbnd --test " + d + "/stat_test.fbnd --kind linear --kind knn "
              "--grid none --report " + d + "/probe.json");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(nlohmann::json::parse(slurp(dir / "probe.json")).at("rows").size() == 2);

  r = cli("finetune --features " + d + "/stat_train.fbnd --test " + d + "/stat_test.fbnd --mode lora:4 "
              "--epochs 5 --report " + d + "/ft.json");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const auto ft = nlohmann::json::parse(slurp(dir / "ft.json"));
  CHECK(ft.at("rows")[0][1] == 4 * (8 + 32));
  CHECK(ft.at("details").at("loss_history").size() == 5);

  const std::string sweep_args = "sweep --synth " + d + "/synth.json --ratios 0.1,1 --seeds 0,1 --extractor stat "
                                 "--probe linear --finetune frozen --no-timing";
  r = cli("--jobs 2 --out-dir " + d + "/sweep1 " + sweep_args);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  r = cli("--out-dir " + d + "/sweep2 " + sweep_args);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(slurp(dir / "sweep1/sweep.csv") == slurp(dir / "sweep2/sweep.csv"));
  CHECK(slurp(dir / "sweep1/sweep.csv").rfind("ratio,seed,method,accuracy,macro_f1,train_seconds\n", 0) == 0);

  r = cli("--out-dir " + d + "/sweep3 sweep --synth " + d + "/synth.json --ratios 0.5 --finetune lora:64");
  CHECK(r.code == 1);
  CHECK(slurp(dir / "sweep3/sweep.csv").find("FAIL:finetune") != std::string::npos);
}

TEST_CASE("scaling subcommands") {
  oracle::TempDir dir("cli_scaling");
  auto r = cli("scaling cost --n 1e6 --batch 32 --steps 1000");
  CHECK(r.code == 0);
  CHECK(r.out == "1.92e+11\n");
  r = cli("scaling cost --n 1e6 --tokens 1e9");
  CHECK(r.out == "6e+15\n");
  CHECK(cli("scaling cost --n 0 --tokens 1e9").code == 1);

  std::ofstream(dir / "pts.csv") << "x,loss\n10,2.2043\n30,1.2238\n100,1.2\n";
  CHECK(cli("scaling fit --points " + (dir / "pts.csv").string()).code == 1);
  std::ofstream(dir / "pts.csv") << "x,loss\n10,5.21\n30,2.31\n100,1.2\n300,0.66\n1000,0.41\n";
  r = cli("--out-dir " + dir.path().string() + " scaling fit --points " + (dir / "pts.csv").string());
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(std::filesystem::exists(dir / "scaling_fit.json"));
}

TEST_CASE("errors name their stage") {
  const auto r = cli("window --manifest /nonexistent/manifest.json");
  CHECK(r.code == 1);
  CHECK(r.out.find("error [ingest]") != std::string::npos);
  CHECK(cli("").code != 0);
}
