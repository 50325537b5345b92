#include "cli_runner.hpp"
#include "fdanet/raw/raw_io.hpp"
#include "oracles/random.hpp"

namespace {

fs::path work_dir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "fdanet_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const fs::path& dataset() {
  static const fs::path d = [] {
    const auto p = work_dir() / "data";
    const auto r = run("synth --out " + q(p) + " --count 4 --size 32x32 --seed 1");
    REQUIRE(r.code == 0);
    return p;
  }();
  return d;
}

const fs::path& trained() {
  static const fs::path d = [] {
    const auto p = work_dir() / "run";
    const auto r = run("train --data " + q(dataset()) + " --out " + q(p) + " --tiny --steps 12 --eval-every 6 --crop 8");
    INFO(r.out);
    REQUIRE(r.code == 0);
    return p;
  }();
  return d;
}

}  // namespace

TEST_SUITE("cli synth") {
  TEST_CASE("same seed writes byte-identical directories") {
    const auto a = work_dir() / "synth_a", b = work_dir() / "synth_b", c = work_dir() / "synth_c";
    REQUIRE(run("synth --out " + q(a) + " --count 4 --size 16x16 --seed 1").code == 0);
    REQUIRE(run("synth --out " + q(b) + " --count 4 --size 16x16 --seed 1").code == 0);
    REQUIRE(run("synth --out " + q(c) + " --count 4 --size 16x16 --seed 2").code == 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
      const auto name = e.path().filename();
      CHECK(slurp(e.path()) == slurp(b / name));
      ++files;
    }
    CHECK(files == 13);
    CHECK(slurp(a / "sample_0000_x.fraw") != slurp(c / "sample_0000_x.fraw"));
    const auto manifest = json::parse(slurp(a / "manifest.json"));
    CHECK(manifest.size() == 4);
  }

  TEST_CASE("bad sizes are rejected with exit 3") {
    CHECK(run("synth --out " + q(work_dir() / "bad") + " --size 15x16").code == 3);
    CHECK(run("synth --count 2").code == 3);
  }
}

TEST_SUITE("cli train and infer") {
  TEST_CASE("train writes config, metrics and checkpoints") {
    const auto& dir = trained();
    CHECK(fs::exists(dir / "config.json"));
    CHECK(fs::exists(dir / "last.fdat"));
    CHECK(fs::exists(dir / "step_000006.fdat"));
    std::ifstream is(dir / "metrics.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "step,loss_total,loss_rgb,loss_raw,psnr");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 12);
    const auto cfg = json::parse(slurp(dir / "config.json"));
    CHECK(cfg.at("train").at("steps") == 12);
    CHECK(cfg.at("model").at("base_channels") == 8);
  }

  TEST_CASE("training is reproducible byte for byte") {
    const auto again = work_dir() / "run_again";
    REQUIRE(run("train --data " + q(dataset()) + " --out " + q(again) + " --tiny --steps 12 --eval-every 6 --crop 8").code == 0);
    CHECK(slurp(again / "metrics.csv") == slurp(trained() / "metrics.csv"));
    CHECK(slurp(again / "last.fdat") == slurp(trained() / "last.fdat"));
  }

  TEST_CASE("flags override the config file") {
    const auto cfg_path = work_dir() / "cfg.json";
    std::ofstream(cfg_path) << R"({"train": {"steps": 3, "crop": 8, "lr": 0.01}, "model": {"base_channels": 8, "num_scales": 2, "local_height": 3, "cid_blocks_per_scale": 1}})";
    const auto out = work_dir() / "run_cfg";
    const auto r = run("train --data " + q(dataset()) + " --out " + q(out) + " --config " + q(cfg_path) + " --steps 2");
    INFO(r.out);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("effective config:") != std::string::npos);
    const auto cfg = json::parse(slurp(out / "config.json"));
    CHECK(cfg.at("train").at("steps") == 2);
    CHECK(cfg.at("train").at("lr") == 0.01);
    std::ofstream(cfg_path) << R"({"train": {"stepz": 3}})";
    CHECK(run("train --data " + q(dataset()) + " --out " + q(out) + " --config " + q(cfg_path)).code == 3);
  }

  TEST_CASE("resume from a mismatched checkpoint names the tensor and exits 3") {
    const auto r = run("train --data " + q(dataset()) + " --out " + q(work_dir() / "run_mismatch") +
                       " --steps 1 --crop 8 --resume " + q(trained() / "last.fdat"));
    CHECK(r.code == 3);
    CHECK(r.out.find("encoder.") != std::string::npos);
  }

  TEST_CASE("streaming inference matches the default executor") {
    const auto input = dataset() / "sample_0001_x.fraw", target = dataset() / "sample_0001_y_rgb.fraw";
    const auto a = run("infer --ckpt " + q(trained() / "last.fdat") + " --input " + q(input) + " --target " + q(target) +
                       " --out " + q(work_dir() / "out_linear") + " --json");
    const auto b = run("infer --ckpt " + q(trained() / "last.fdat") + " --input " + q(input) + " --out " +
                       q(work_dir() / "out_stream") + " --streaming --json");
    INFO(a.out, b.out);
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const auto ya = fdanet::raw::read_raw_tensor(work_dir() / "out_linear.fraw").tensor;
    const auto yb = fdanet::raw::read_raw_tensor(work_dir() / "out_stream.fraw").tensor;
    CHECK(ya.shape() == fdanet::Shape{3, 32, 32});
    CHECK(oracle::max_abs_diff(ya.data(), yb.data()) < 1e-5);
    CHECK(fs::exists(work_dir() / "out_linear.ppm"));
    const auto j = last_json_line(a.out);
    CHECK(j.contains("psnr"));
    CHECK(j.contains("baseline_psnr"));
    CHECK(last_json_line(b.out).at("strategy") == "streaming");
  }

  TEST_CASE("error categories map to exit codes") {
    const auto input = dataset() / "sample_0001_x.fraw";
    CHECK(run("infer --ckpt " + q(work_dir() / "nope.fdat") + " --input " + q(input) + " --out " + q(work_dir() / "o")).code == 3);
    std::ofstream(work_dir() / "junk.fdat") << "not a checkpoint";
    const auto junk = run("infer --ckpt " + q(work_dir() / "junk.fdat") + " --input " + q(input) + " --out " + q(work_dir() / "o"));
    CHECK(junk.code == 3);
    CHECK(junk.out.find("byte offset") != std::string::npos);
    CHECK(run("infer --ckpt " + q(trained() / "last.fdat") + " --input " + q(work_dir() / "missing.fraw") + " --out " +
              q(work_dir() / "o")).code == 2);
    CHECK(run("train --data " + q(work_dir() / "no_such_dir") + " --out " + q(work_dir() / "o2") + " --tiny --steps 1").code == 2);
    CHECK(run("frobnicate").code == 3);
  }
}

TEST_SUITE("cli reports") {
  TEST_CASE("check quick passes") {
    const auto r = run("check --level quick --json");
    INFO(r.out);
    CHECK(r.code == 0);
    const auto j = last_json_line(r.out);
    CHECK(j.at("passed") == true);
    CHECK(j.at("results").size() > 20);
  }

  TEST_CASE("flops json obeys the inference law") {
    const auto r = run("flops --input 1x4x64x64 --json");
    REQUIRE(r.code == 0);
    const auto j = last_json_line(r.out);
    CHECK(j.at("infer_macs").get<std::uint64_t>() < j.at("train_macs").get<std::uint64_t>());
    CHECK(j.at("total_params") == 229555);
    CHECK(run("flops --input 1x4x62x64").code == 3);
  }

  TEST_CASE("bench json lists one row per grid point") {
    const auto r = run("bench --impl linear --grid 8x16,8x32 --channels 4 --local-height 3 --json");
    INFO(r.out);
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    REQUIRE(j.size() == 1);
    CHECK(j[0].at("impl") == "linear");
    CHECK(j[0].at("points") == 2);
    CHECK(run("bench --impl linear --grid 8x16 --repeats 2").code == 3);
  }
}
