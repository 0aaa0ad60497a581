// Drives the installed command-line binary as a user would.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>
#include <string>

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(MARKSWEEP_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string field(const std::string& out, const std::string& key) {
  std::smatch m;
  const std::regex re(key + " ([^\\s]+)");
  return std::regex_search(out, m, re) ? m[1].str() : "";
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Tiny training run shared by the train and eval cases.
std::string smoke_config(const fs::path& out_dir) {
  std::ostringstream os;
  os << R"({"seed": 3, "threads": 1, "paths": {"output_dir": ")" << out_dir.string() << R"("},
  "train": {"total_steps": 12, "warmup_steps": 2, "batch_size": 2, "patch_size": 32,
            "synthetic_images": 10, "synthetic_size": 64, "val_every": 6, "val_patches": 4}})";
  return os.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage and threshold") {
    CHECK(run("").code == 1);
    CHECK(run("--help").code == 0);
    CHECK(run("frobnicate").code == 1);
    CHECK(run("--version").out.find("0.1.0") != std::string::npos);
    Run t = run("threshold --bits 48 --fpr 1e-6");
    CHECK(t.code == 0);
    CHECK(t.out == "41 (0.854)\n");
    CHECK(run("threshold --bits 1 --fpr 0.5").out == "1 (1.000)\n");
    CHECK(run("threshold --bits 0 --fpr 0.5").code == 1);
    CHECK(run("threshold --bits 48 --fpr").code == 1);
  }

  TEST_CASE("embed and decode round trip") {
    testutil::TempDir dir("cli-embed");
    const fs::path d = dir.path();
    REQUIRE(run("synth --out " + q(d / "set") + " --count 1 --size 128 --seed 11").code == 0);
    Run e = run("embed --in " + q(d / "set/tex_0000.png") + " --out " + q(d / "xw.png") + " --seed 5");
    REQUIRE(e.code == 0);
    const std::string hex = field(e.out, "payload");
    CHECK(hex.size() == 12);
    CHECK(std::stod(field(e.out, "psnr")) >= 36.0);
    Run d1 = run("decode --in " + q(d / "xw.png") + " --expect " + hex);
    CHECK(d1.code == 0);
    CHECK(field(d1.out, "ba") == "1.000");

    Run z = run("embed --in " + q(d / "set/tex_0000.png") + " --out " + q(d / "xz.png") + " --payload 000000000000");
    REQUIRE(z.code == 0);
    CHECK(field(run("decode --in " + q(d / "xz.png")).out, "payload") == "000000000000");

    REQUIRE(run("synth --out " + q(d / "small") + " --count 1 --size 32").code == 0);
    Run s = run("embed --in " + q(d / "small/tex_0000.png") + " --out " + q(d / "s.png"));
    CHECK(s.code == 3);
    CHECK(s.out.find("64x64") != std::string::npos);
    CHECK(run("embed --in " + q(d / "none.png") + " --out " + q(d / "n.png")).code == 2);
    CHECK(run("embed --in " + q(d / "set/tex_0000.png") + " --out " + q(d / "b.png") + " --payload xyz").code == 1);
  }

  TEST_CASE("attack command") {
    testutil::TempDir dir("cli-attack");
    const fs::path d = dir.path();
    REQUIRE(run("synth --out " + q(d) + " --count 1 --size 224 --seed 2").code == 0);
    const std::string in = q(d / "tex_0000.png");
    Run b = run("attack --attack blur --ksize 1 --in " + in + " --out " + q(d / "b.png"));
    CHECK(b.code == 0);
    CHECK(slurp(d / "b.png") == slurp(d / "tex_0000.png"));
    CHECK(run("attack --attack blur --ksize 10 --in " + in + " --out " + q(d / "b10.png")).out.find("promoted") !=
          std::string::npos);
    CHECK(run("attack --attack crop --ratio 1.0 --in " + in + " --out " + q(d / "c.png")).code == 0);
    CHECK(slurp(d / "c.png") == slurp(d / "tex_0000.png"));
    run("attack --attack noise --seed 4 --in " + in + " --out " + q(d / "n1.png"));
    run("attack --attack noise --seed 4 --in " + in + " --out " + q(d / "n2.png"));
    CHECK(slurp(d / "n1.png") == slurp(d / "n2.png"));
    CHECK(run("attack --attack sepia --in " + in + " --out " + q(d / "x.png")).code == 1);
    CHECK(run("attack --attack marksweep --in " + in + " --out " + q(d / "m.png")).code == 1);
    write(d / "junk.ckpt", "MSWEEP01 this is not a checkpoint, only some padding to get past the header");
    CHECK(run("attack --attack marksweep --checkpoint " + q(d / "junk.ckpt") + " --in " + in + " --out " +
              q(d / "m.png"))
              .code == 4);
    CHECK(run("attack --attack marksweep --checkpoint " + q(d / "absent.ckpt") + " --in " + in + " --out " +
              q(d / "m.png"))
              .code == 2);
  }

  TEST_CASE("train, eval and dpi-demo") {
    testutil::TempDir dir("cli-run");
    const fs::path d = dir.path();
    write(d / "typo.json", R"({"train": {"total_stesp": 5}})");
    Run typo = run("train " + q(d / "typo.json"));
    CHECK(typo.code == 1);
    CHECK(typo.out.find("train.total_stesp") != std::string::npos);

    write(d / "a.json", smoke_config(d / "a"));
    write(d / "b.json", smoke_config(d / "b"));
    Run ta = run("train " + q(d / "a.json"));
    REQUIRE(ta.code == 0);
    REQUIRE(run("train " + q(d / "b.json")).code == 0);
    CHECK(fs::exists(d / "a/model.ckpt"));
    CHECK(fs::exists(d / "a/resolved_config.json"));
    CHECK(fs::exists(d / "a/VERSION"));
    CHECK(fs::exists(d / "a/train_log.csv"));
    CHECK(slurp(d / "a/model.ckpt") == slurp(d / "b/model.ckpt"));

    REQUIRE(run("synth --out " + q(d / "set") + " --count 3 --size 128 --seed 8").code == 0);
    auto eval_config = [&](const std::string& out, const std::string& attacks, const fs::path& set) {
      std::ostringstream os;
      os << R"({"seed": 4, "paths": {"dataset": ")" << set.string() << R"(", "checkpoint": ")"
         << (d / "a/model.ckpt").string() << R"(", "output_dir": ")" << (d / out).string() << R"("},
        "eval": {"record_timing": false}, "attack": {"list": )" << attacks << "}}";
      return os.str();
    };
    const std::string five =
        R"([{"kind": "marksweep"}, {"kind": "jpeg"}, {"kind": "blur"}, {"kind": "noise"}, {"kind": "crop"}])";
    write(d / "e1.json", eval_config("e1", five, d / "set"));
    write(d / "e2.json", eval_config("e2", five, d / "set"));
    Run e1 = run("eval " + q(d / "e1.json") + " --threads 1");
    REQUIRE(e1.code == 0);
    REQUIRE(run("eval " + q(d / "e2.json") + " --threads 1").code == 0);
    for (const char* label : {"none", "marksweep", "jpeg_q50", "blur_k10", "noise_s0.05", "crop_0.9"})
      CHECK(e1.out.find(label) != std::string::npos);
    const std::string csv = slurp(d / "e1/report.csv");
    CHECK(count_lines(csv) == 1 + 3 * 6);
    CHECK(csv == slurp(d / "e2/report.csv"));
    CHECK(fs::exists(d / "e1/report.json"));
    CHECK(fs::exists(d / "e1/resolved_config.json"));

    write(d / "e0.json", eval_config("e0", "[]", d / "set"));
    REQUIRE(run("eval " + q(d / "e0.json")).code == 0);
    CHECK(count_lines(slurp(d / "e0/report.csv")) == 1 + 3);

    REQUIRE(run("synth --out " + q(d / "tiny") + " --count 2 --size 32").code == 0);
    write(d / "et.json", eval_config("et", R"([{"kind": "blur"}])", d / "tiny"));
    CHECK(run("eval " + q(d / "et.json")).code == 5);

    write(d / "dpi.json", R"({"paths": {"output_dir": ")" + (d / "dpi").string() +
                              R"("}, "dpi": {"n_trials": 200, "bootstrap": 50, "force_sigma_zero": true}})");
    Run dp = run("dpi-demo " + q(d / "dpi.json"));
    CHECK(dp.code == 0);
    CHECK(dp.out.find("chain degenerate: equal within noise") != std::string::npos);
    CHECK(dp.out.find("DPI ordering: PASS") != std::string::npos);
    CHECK(fs::exists(d / "dpi/dpi.json"));
  }
}
