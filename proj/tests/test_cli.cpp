// End-to-end checks of the command-line binary: spawn it as a subprocess the
// way a user would, then inspect exit codes, stdout, and the files it leaves
// behind. SUBARU_CLI_PATH is injected by the build so the test finds the
// binary regardless of where ctest runs.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "subaru/audio.hpp"
#include "subaru/synth.hpp"

using namespace subaru;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;  // stdout + stderr interleaved
};

CmdResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    const std::string cmd = env_prefix + std::string(SUBARU_CLI_PATH) + " " + args + " 2>&1";
    CmdResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[512];
    while (fgets(buf, sizeof(buf), pipe)) r.out += buf;
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

// every test writes into one scratch dir under the ctest working directory
fs::path scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::current_path() / "cli_test_scratch";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("help exits 0 and lists the subcommands") {
    const CmdResult r = run_cli("--help");
    CHECK(r.exit_code == 0);
    for (const char* sub : {"degrade", "train", "enhance", "stream-sim", "evaluate",
                            "power-report", "sweep", "plot"})
        CHECK(r.out.find(sub) != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
    CHECK(run_cli("no-such-subcommand").exit_code == 2);
    CHECK(run_cli("").exit_code == 2);                  // a subcommand is required
    CHECK(run_cli("degrade only_one_path.wav").exit_code == 2);
    CHECK(run_cli("enhance in.wav out.wav").exit_code == 2);  // --ckpt is required
    CHECK(run_cli("--bad.").exit_code == 2);            // malformed override
}

TEST_CASE("runtime errors exit 1") {
    CHECK(run_cli("degrade missing.wav out.wav").exit_code == 1);
    CHECK(run_cli("power-report --from nonsense").exit_code == 1);
    const CmdResult r = run_cli("evaluate --ref missing_a.wav --est missing_b.wav");
    CHECK(r.exit_code == 1);
    CHECK(r.out.find("error") != std::string::npos);
}

TEST_CASE("power-report prints the measured table and the headline saving") {
    const CmdResult r = run_cli("power-report --from 24000:12 --to 4000:8");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("3.31x power saving") != std::string::npos);
    CHECK(r.out.find("0.702") != std::string::npos);
    CHECK(r.out.find("2.325") != std::string::npos);
    CHECK(r.out.find("diverge") != std::string::npos);

    const fs::path run_dir = scratch() / "power_run";
    const CmdResult rec = run_cli("--paths.run_dir " + q(run_dir) + " power-report --records");
    REQUIRE(rec.exit_code == 0);
    std::ifstream csv(run_dir / "power_table.csv");
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    CHECK(header == "rate_hz,bits,current_ua,power_mw");
    int rows = 0;
    for (std::string line; std::getline(csv, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == 12);
    CHECK(fs::exists(run_dir / "config.resolved"));
}

TEST_CASE("degrade produces the requested rate and bit depth") {
    const fs::path in = scratch() / "clean.wav";
    const fs::path out = scratch() / "deg.wav";
    save_wav(in.string(), synth_speech_like(1.0, 16000, 42));

    const CmdResult r = run_cli("degrade --rate 4000 --bits 8 " + q(in) + " " + q(out));
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("4000 Hz/8-bit") != std::string::npos);
    const AudioClip deg = load_wav(out.string());
    CHECK(deg.sample_rate == 4000);
    CHECK(deg.length() == 4000);
    // Every sample sits on the 8-bit mid-tread grid. The wav container is
    // 16-bit PCM, whose own rounding is < 0.006 grid steps -- far from the
    // 0.5 that would mean a sample actually off the grid.
    const double lsb = 2.0 / 256.0;
    for (double s : deg.samples) {
        const double steps = s / lsb;
        CHECK(std::abs(steps - std::round(steps)) < 0.02);
    }
}

TEST_CASE("config file, env var, and dotted overrides all reach the pipeline") {
    const fs::path in = scratch() / "cfg_in.wav";
    save_wav(in.string(), synth_speech_like(0.5, 16000, 43));

    const fs::path cfg = scratch() / "test.cfg";
    std::ofstream(cfg) << "[degrade]\nrate = 6000\n";

    const fs::path out_a = scratch() / "cfg_a.wav";
    REQUIRE(run_cli("--config " + q(cfg) + " degrade " + q(in) + " " + q(out_a)).exit_code == 0);
    CHECK(load_wav(out_a.string()).sample_rate == 6000);

    // same config picked up through the environment variable
    const fs::path out_b = scratch() / "cfg_b.wav";
    REQUIRE(run_cli("degrade " + q(in) + " " + q(out_b),
                    "SUBARU_CONFIG=" + q(cfg) + " ").exit_code == 0);
    CHECK(load_wav(out_b.string()).sample_rate == 6000);

    // dotted override beats the file
    const fs::path out_c = scratch() / "cfg_c.wav";
    REQUIRE(run_cli("--config " + q(cfg) + " --degrade.rate 8000 degrade " + q(in) + " " +
                    q(out_c)).exit_code == 0);
    CHECK(load_wav(out_c.string()).sample_rate == 8000);

    // = form of the override
    const fs::path out_d = scratch() / "cfg_d.wav";
    REQUIRE(run_cli("--degrade.rate=12000 degrade " + q(in) + " " + q(out_d)).exit_code == 0);
    CHECK(load_wav(out_d.string()).sample_rate == 12000);

    // a bad value for a real key fails when the config is resolved
    CHECK(run_cli("--degrade.rate notanumber degrade " + q(in) + " " +
                  q(scratch() / "cfg_e.wav")).exit_code == 1);

    // a typo'd key is a usage error, not a silent no-op
    CHECK(run_cli("--degrade.target_rate 8000 degrade " + q(in) + " " +
                  q(scratch() / "cfg_f.wav")).exit_code == 2);
}

TEST_CASE("evaluate scores a pair of files and writes records") {
    const fs::path ref = scratch() / "ref.wav";
    save_wav(ref.string(), synth_speech_like(1.0, 16000, 44));
    const fs::path recs = scratch() / "eval_records.csv";

    const CmdResult r =
        run_cli("evaluate --ref " + q(ref) + " --est " + q(ref) + " --out " + q(recs));
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("mean") != std::string::npos);
    std::ifstream f(recs);
    REQUIRE(f.good());
    std::string header, row;
    std::getline(f, header);
    std::getline(f, row);
    // identical files: zero spectral distance, capped distortion ratio
    CHECK(row.find(",0,100,") != std::string::npos);
}

TEST_CASE("stream-sim budget mode reproduces the injected arithmetic") {
    const fs::path run_dir = scratch() / "stream_run";
    const CmdResult r =
        run_cli("--paths.run_dir " + q(run_dir) + " stream-sim --inject 71 --frames 4");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("83.00") != std::string::npos);
    CHECK(r.out.find("realtime (inference < frame duration): true") != std::string::npos);
    CHECK(r.out.find("one-way delay within 150 ms: true") != std::string::npos);

    std::ifstream csv(run_dir / "stream_records.csv");
    REQUIRE(csv.good());
    int lines = 0;
    for (std::string line; std::getline(csv, line);)
        if (!line.empty()) ++lines;
    CHECK(lines == 5);  // header + 4 frames

    // over the interactive-delay budget
    const CmdResult slow =
        run_cli("--paths.run_dir " + q(run_dir) + " stream-sim --inject 140 --frames 4");
    REQUIRE(slow.exit_code == 0);
    CHECK(slow.out.find("one-way delay within 150 ms: false") != std::string::npos);
}

TEST_CASE("sweep writes the grid as records and a chart") {
    const fs::path run_dir = scratch() / "sweep_run";
    const CmdResult r = run_cli("--paths.run_dir " + q(run_dir) +
                                " sweep --clips 2 --seconds 0.5 --rates 12000,4000 --bits 8");
    REQUIRE(r.exit_code == 0);

    std::ifstream csv(run_dir / "sweep.csv");
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    CHECK(header == "rate_hz,bits,mean_lsd");
    double lsd_12k = -1.0, lsd_4k = -1.0;
    for (std::string line; std::getline(csv, line);) {
        int rate = 0, bits = 0;
        double v = 0.0;
        if (std::sscanf(line.c_str(), "%d,%d,%lf", &rate, &bits, &v) == 3)
            (rate == 12000 ? lsd_12k : lsd_4k) = v;
    }
    REQUIRE(lsd_12k > 0.0);
    REQUIRE(lsd_4k > 0.0);
    CHECK(lsd_4k >= lsd_12k);  // keeping less bandwidth costs spectral distance

    REQUIRE(fs::exists(run_dir / "sweep.svg"));
    CHECK(fs::file_size(run_dir / "sweep.svg") > 200);

    // plot re-renders the records elsewhere
    const fs::path plot_dir = scratch() / "plot_run";
    const CmdResult p = run_cli("--paths.run_dir " + q(plot_dir) + " plot --sweep " +
                                q(run_dir / "sweep.csv"));
    REQUIRE(p.exit_code == 0);
    CHECK(fs::exists(plot_dir / "sweep.svg"));
}

TEST_CASE("make-data writes a loadable manifest with the requested splits") {
    const fs::path dir = scratch() / "corpus";
    const CmdResult r = run_cli("make-data --out " + q(dir) +
                                " --clips 5 --seconds 0.5 --val-frac 0.2 --with-aux");
    REQUIRE(r.exit_code == 0);
    const auto entries = load_manifest((dir / "manifest.csv").string());
    REQUIRE(entries.size() == 5);
    int train = 0, val = 0;
    for (const auto& e : entries) {
        CHECK(fs::exists(dir / e.clean_path));
        CHECK_FALSE(e.bcm_path.empty());
        CHECK(fs::exists(dir / e.bcm_path));
        if (e.split == "train") ++train;
        if (e.split == "val") ++val;
    }
    CHECK(train == 4);
    CHECK(val == 1);
}
