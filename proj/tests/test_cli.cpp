#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#ifndef LMK_CLI_PATH
#define LMK_CLI_PATH "lmk"
#endif

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LMK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("cli usage errors exit with 2") {
    CHECK(run_cli("definitely-not-a-command") == 2);
    CHECK(run_cli("") == 2);                                  // missing subcommand
    CHECK(run_cli("eval-match --data x.json") == 2);          // missing --checkpoint
    CHECK(run_cli("pretrain") == 2);                          // missing --data
    CHECK(run_cli("gen-data --no-such-flag 3") == 2);
}

TEST_CASE("cli runtime errors exit with 1") {
    CHECK(run_cli("pretrain --data /nonexistent/manifest.json") == 1);
    CHECK(run_cli("eval-match --data /nonexistent/manifest.json --checkpoint /nonexistent.ckpt") ==
          1);
}

TEST_CASE("gen-data writes a loadable dataset and provenance record") {
    const fs::path dir = fs::temp_directory_path() / "lmk_cli_gen";
    fs::remove_all(dir);
    CHECK(run_cli("gen-data --n 3 --size 48 --seed 9 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "annotations.csv"));
    CHECK(fs::exists(dir / "images/img_00002.png"));
    CHECK(fs::exists(dir / "masks/img_00002.png"));
    CHECK(fs::exists(dir / "run.json"));
    fs::remove_all(dir);
}
