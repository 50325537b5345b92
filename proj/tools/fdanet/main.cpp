#include <cstdio>
#include <exception>

#include "commands.hpp"
#include "fdanet/errors.hpp"

namespace {

int report(const char* kind, const std::exception& e, int code) {
  std::fprintf(stderr, "fdanet: %s: %s\n", kind, e.what());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace fdanet;
  CLI::App app{"Raw low-light enhancement toolkit: synth, train, infer, check, bench, flops"};
  app.require_subcommand(1);
  cli::register_synth(app);
  cli::register_train(app);
  cli::register_infer(app);
  cli::register_check(app);
  cli::register_bench(app);
  cli::register_flops(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : cli::kFormatError;
  } catch (const IoError& e) {
    return report("io error", e, cli::kIoError);
  } catch (const FormatError& e) {
    return report("format error", e, cli::kFormatError);
  } catch (const DimensionError& e) {
    return report("dimension error", e, cli::kFormatError);
  } catch (const ConfigError& e) {
    return report("config error", e, cli::kFormatError);
  } catch (const ProtocolError& e) {
    return report("protocol error", e, cli::kFormatError);
  } catch (const NumericError& e) {
    return report("numeric error", e, cli::kVerifyFailed);
  } catch (const UsageError& e) {
    return report("usage error", e, cli::kFormatError);
  } catch (const std::exception& e) {
    return report("error", e, cli::kVerifyFailed);
  }
  return cli::exit_status();
}
