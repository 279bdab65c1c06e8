// Runs every acceptance criterion and prints one line per criterion.
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "headsynth/verify.hpp"

int main(int argc, char** argv) {
  headsynth::VerifyOptions options;
  options.scratch_dir = argc > 1 ? std::filesystem::path(argv[1])
                                 : std::filesystem::temp_directory_path() / "headsynth_acceptance";
  std::filesystem::create_directories(options.scratch_dir);
  int failed = 0, index = 0;
  for (const auto& check : headsynth::acceptance_checks()) {
    const headsynth::CheckResult r = headsynth::run_check(check, options);
    std::printf("[%s] criterion %2d %-32s %7.2fs  %s\n", r.passed ? "PASS" : "FAIL", ++index, r.name.c_str(),
                r.seconds, r.detail.c_str());
    std::fflush(stdout);
    failed += !r.passed;
  }
  std::printf("%d of %d criteria passed\n", index - failed, index);
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
