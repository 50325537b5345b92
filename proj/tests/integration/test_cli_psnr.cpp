#include "cli_runner.hpp"

TEST_CASE("a trained checkpoint beats the plain ISP on held-out samples") {
  const auto dir = fs::temp_directory_path() / "fdanet_cli_psnr";
  fs::remove_all(dir);
  fs::create_directories(dir);
  REQUIRE(run("synth --out " + q(dir / "train") + " --count 32 --size 64x64 --seed 1").code == 0);
  REQUIRE(run("synth --out " + q(dir / "held") + " --count 6 --size 64x64 --seed 2").code == 0);
  const auto t = run("train --data " + q(dir / "train") + " --out " + q(dir / "run") +
                     " --tiny --steps 3000 --eval-every 1000 --crop 32 --lr 2e-3");
  INFO(t.out);
  REQUIRE(t.code == 0);

  double model = 0, baseline = 0;
  for (int i = 0; i < 6; ++i) {
    const auto stem = dir / "held" / ("sample_000" + std::to_string(i));
    const auto r = run("infer --ckpt " + q(dir / "run" / "last.fdat") + " --input " + q(stem.string() + "_x.fraw") +
                       " --target " + q(stem.string() + "_y_rgb.fraw") + " --out " + q(dir / "out") + " --json");
    REQUIRE(r.code == 0);
    const auto j = last_json_line(r.out);
    model += j.at("psnr").get<double>() / 6;
    baseline += j.at("baseline_psnr").get<double>() / 6;
  }
  MESSAGE("held-out mean PSNR: model " << model << " dB, ISP of amplified input " << baseline << " dB");
  CHECK(model > baseline);
  fs::remove_all(dir);
}
