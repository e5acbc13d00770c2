#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "icct/datasets.hpp"
#include "icct/errors.hpp"
#include "icct/icc.hpp"
#include "icct/mlp.hpp"
#include "icct/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + ICCT_CLI_PATH + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    CliResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return result;
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe))
        result.output += buf.data();
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string slurp(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    os << text;
}

const char* kSynthSpec = R"({
  "n_classes": 4, "dim": 6, "train_per_class": 30, "test_per_class": 15,
  "center_scale": 4.0, "noise_stddev": 0.8, "overlap_pairs": 1, "seed": 11
})";

std::string experiment_config(const fs::path& data_dir, const fs::path& out_dir,
                              const std::string& extra) {
    return std::string(R"({
  "data": {"csv": {"train": ")") +
           (data_dir / "train.csv").string() + R"(", "test": ")" +
           (data_dir / "test.csv").string() + R"("}},
  "student": {"layers": [6, 10, 4]},
  "optimizer": {"kind": "sgd_nesterov", "learning_rate": 0.05, "momentum": 0.9,
                "weight_decay": 0.0001},
  "epochs": 3, "batch_size": 20,
  "seeds": [1, 2],
  "out_dir": ")" +
           out_dir.string() + "\"" + extra + "\n}";
}

} // namespace

TEST(Cli, NoArgumentsIsUsageError) {
    const auto r = run_cli("");
    EXPECT_EQ(r.exit_code, icct::kExitUsage);
}

TEST(Cli, UnknownFlagIsUsageError) {
    const auto r = run_cli("gradcheck --no-such-flag");
    EXPECT_EQ(r.exit_code, icct::kExitUsage);
}

TEST(Cli, GenDataWritesDeterministicCsvs) {
    TempDir dir("icct_cli_gen");
    write_file(dir.path / "spec.json", kSynthSpec);
    const auto r1 = run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                            (dir.path / "d1").string());
    EXPECT_EQ(r1.exit_code, 0) << r1.output;
    EXPECT_TRUE(fs::exists(dir.path / "d1/train.csv"));
    EXPECT_TRUE(fs::exists(dir.path / "d1/test.csv"));

    // Row counts: header + n_classes * per_class.
    std::istringstream train_csv(slurp(dir.path / "d1/train.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(train_csv, line)) ++lines;
    EXPECT_EQ(lines, 1u + 4u * 30u);

    const auto r2 = run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                            (dir.path / "d2").string());
    EXPECT_EQ(r2.exit_code, 0) << r2.output;
    EXPECT_EQ(slurp(dir.path / "d1/train.csv"), slurp(dir.path / "d2/train.csv"));
    EXPECT_EQ(slurp(dir.path / "d1/test.csv"), slurp(dir.path / "d2/test.csv"));
}

TEST(Cli, GenDataRejectsSingleClass) {
    TempDir dir("icct_cli_gen_bad");
    write_file(dir.path / "spec.json",
               R"({"n_classes": 1, "dim": 4, "train_per_class": 10, "test_per_class": 5,
                   "center_scale": 3.0, "noise_stddev": 1.0, "overlap_pairs": 0, "seed": 1})");
    const auto r = run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                           (dir.path / "out").string());
    EXPECT_EQ(r.exit_code, icct::kExitConfig) << r.output;
}

TEST(Cli, UnknownConfigKeyIsConfigError) {
    TempDir dir("icct_cli_badkey");
    write_file(dir.path / "spec.json", kSynthSpec);
    run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
            (dir.path / "data").string());
    write_file(dir.path / "cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs", ",\n  \"typo_key\": 1"));
    const auto r = run_cli("train --config " + (dir.path / "cfg.json").string());
    EXPECT_EQ(r.exit_code, icct::kExitConfig) << r.output;
    EXPECT_NE(r.output.find("typo_key"), std::string::npos);
}

TEST(Cli, MalformedDataCsvIsDataError) {
    TempDir dir("icct_cli_baddata");
    fs::create_directories(dir.path / "data");
    write_file(dir.path / "data/train.csv", "# n_classes=4 dim=6\n1,2,3,4,5,oops,0\n");
    write_file(dir.path / "data/test.csv", "# n_classes=4 dim=6\n1,2,3,4,5,6,0\n");
    write_file(dir.path / "cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs", ""));
    const auto r = run_cli("train --config " + (dir.path / "cfg.json").string());
    EXPECT_EQ(r.exit_code, icct::kExitData) << r.output;
}

TEST(Cli, TrainDistillReportPipeline) {
    TempDir dir("icct_cli_pipeline");
    write_file(dir.path / "spec.json", kSynthSpec);
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                      (dir.path / "data").string())
                  .exit_code,
              0);

    // Solo student baseline.
    write_file(dir.path / "train_cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs", ""));
    const auto train_run = run_cli("train --config " + (dir.path / "train_cfg.json").string());
    ASSERT_EQ(train_run.exit_code, 0) << train_run.output;
    EXPECT_TRUE(fs::exists(dir.path / "runs/train_seed1.csv"));
    EXPECT_TRUE(fs::exists(dir.path / "runs/train_seed1.json"));
    EXPECT_TRUE(fs::exists(dir.path / "runs/train_seed1.ckpt"));
    EXPECT_TRUE(fs::exists(dir.path / "runs/summary_train.csv"));

    // Teacher (bigger net), then ICC distillation from its checkpoint.
    std::string teacher_cfg =
        experiment_config(dir.path / "data", dir.path / "teacher_runs", "");
    teacher_cfg.replace(teacher_cfg.find("[6, 10, 4]"), 10, "[6, 24, 4]");
    write_file(dir.path / "teacher_cfg.json", teacher_cfg);
    ASSERT_EQ(run_cli("train --config " + (dir.path / "teacher_cfg.json").string()).exit_code, 0);

    write_file(dir.path / "distill_cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs",
                                 ",\n  \"teacher\": {\"layers\": [6, 24, 4]},\n"
                                 "  \"transfer\": {\"kind\": \"icc\", \"lambda\": 0.5},\n"
                                 "  \"scenario\": \"teacher_larger\""));
    const auto distill_run =
        run_cli("distill --config " + (dir.path / "distill_cfg.json").string() + " --teacher " +
                (dir.path / "teacher_runs/train_seed1.ckpt").string());
    ASSERT_EQ(distill_run.exit_code, 0) << distill_run.output;
    const std::string summary = slurp(dir.path / "runs/summary_distill_icc.csv");
    EXPECT_NE(summary.find("ICCT,1,"), std::string::npos) << summary;
    EXPECT_NE(summary.find("ICCT,mean,"), std::string::npos) << summary;

    // KD and LT baselines into the same runs directory.
    write_file(dir.path / "kd_cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs",
                                 ",\n  \"teacher\": {\"layers\": [6, 24, 4]},\n"
                                 "  \"transfer\": {\"kind\": \"kd\", \"lambda\": 1.0,"
                                 " \"temperature\": 4.0}"));
    ASSERT_EQ(run_cli("distill --config " + (dir.path / "kd_cfg.json").string() + " --teacher " +
                      (dir.path / "teacher_runs/train_seed1.ckpt").string())
                  .exit_code,
              0);
    write_file(dir.path / "lt_cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs",
                                 ",\n  \"teacher\": {\"layers\": [6, 24, 4]},\n"
                                 "  \"transfer\": {\"kind\": \"lt\", \"lambda\": 0.1}"));
    ASSERT_EQ(run_cli("distill --config " + (dir.path / "lt_cfg.json").string() + " --teacher " +
                      (dir.path / "teacher_runs/train_seed1.ckpt").string())
                  .exit_code,
              0);

    // Comparison table over the runs directory: baseline + three methods.
    const auto report_run = run_cli("report --runs " + (dir.path / "runs").string() + " --out " +
                                    (dir.path / "report.csv").string());
    ASSERT_EQ(report_run.exit_code, 0) << report_run.output;
    const std::string table = slurp(dir.path / "report.csv");
    EXPECT_NE(table.find("scenario,method,s_baseline,t_baseline,err"), std::string::npos);
    for (const char* method : {"solo", "ICCT", "KD", "LT"})
        EXPECT_NE(table.find(std::string(",") + method + ","), std::string::npos)
            << method << " missing from:\n"
            << table;

    // Idempotence: re-running report produces identical bytes.
    const std::string before = slurp(dir.path / "report.csv");
    ASSERT_EQ(run_cli("report --runs " + (dir.path / "runs").string() + " --out " +
                      (dir.path / "report.csv").string())
                  .exit_code,
              0);
    EXPECT_EQ(before, slurp(dir.path / "report.csv"));
}

TEST(Cli, DistillLambdaZeroSummaryMatchesTrain) {
    TempDir dir("icct_cli_lambda0");
    write_file(dir.path / "spec.json", kSynthSpec);
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                      (dir.path / "data").string())
                  .exit_code,
              0);
    write_file(dir.path / "train_cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs_a", ""));
    ASSERT_EQ(run_cli("train --config " + (dir.path / "train_cfg.json").string()).exit_code, 0);

    std::string teacher_cfg = experiment_config(dir.path / "data", dir.path / "teach", "");
    teacher_cfg.replace(teacher_cfg.find("[6, 10, 4]"), 10, "[6, 24, 4]");
    write_file(dir.path / "teacher_cfg.json", teacher_cfg);
    ASSERT_EQ(run_cli("train --config " + (dir.path / "teacher_cfg.json").string()).exit_code, 0);

    write_file(dir.path / "distill_cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs_b",
                                 ",\n  \"teacher\": {\"layers\": [6, 24, 4]},\n"
                                 "  \"transfer\": {\"kind\": \"icc\", \"lambda\": 0.0}"));
    ASSERT_EQ(run_cli("distill --config " + (dir.path / "distill_cfg.json").string() +
                      " --teacher " + (dir.path / "teach/train_seed1.ckpt").string())
                  .exit_code,
              0);
    // Same seeds, lambda = 0: per-seed errors match the solo summary.
    const std::string solo = slurp(dir.path / "runs_a/summary_train.csv");
    const std::string dist = slurp(dir.path / "runs_b/summary_distill_icc.csv");
    auto errs = [](const std::string& csv) {
        std::vector<std::string> out;
        std::istringstream ss(csv);
        std::string line;
        std::getline(ss, line); // header
        while (std::getline(ss, line)) out.push_back(line.substr(line.rfind(',') + 1));
        return out;
    };
    EXPECT_EQ(errs(solo), errs(dist));
}

TEST(Cli, DistillTeacherMismatchIsConfigError) {
    TempDir dir("icct_cli_mismatch");
    write_file(dir.path / "spec.json", kSynthSpec);
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                      (dir.path / "data").string())
                  .exit_code,
              0);
    // Teacher trained on a different class count.
    write_file(dir.path / "spec6.json",
               R"({"n_classes": 6, "dim": 6, "train_per_class": 20, "test_per_class": 10,
                   "center_scale": 4.0, "noise_stddev": 0.8, "overlap_pairs": 0, "seed": 3})");
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec6.json").string() + " --out " +
                      (dir.path / "data6").string())
                  .exit_code,
              0);
    std::string teacher_cfg = experiment_config(dir.path / "data6", dir.path / "teach", "");
    teacher_cfg.replace(teacher_cfg.find("[6, 10, 4]"), 10, "[6, 24, 6]");
    write_file(dir.path / "teacher_cfg.json", teacher_cfg);
    ASSERT_EQ(run_cli("train --config " + (dir.path / "teacher_cfg.json").string()).exit_code, 0);

    write_file(dir.path / "distill_cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs",
                                 ",\n  \"transfer\": {\"kind\": \"icc\", \"lambda\": 0.5}"));
    const auto r = run_cli("distill --config " + (dir.path / "distill_cfg.json").string() +
                           " --teacher " + (dir.path / "teach/train_seed1.ckpt").string());
    EXPECT_EQ(r.exit_code, icct::kExitConfig) << r.output;
    EXPECT_NE(r.output.find("teacher"), std::string::npos);
}

TEST(Cli, BornAgainSummaryHasGenerationRows) {
    TempDir dir("icct_cli_ba");
    write_file(dir.path / "spec.json", kSynthSpec);
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                      (dir.path / "data").string())
                  .exit_code,
              0);
    write_file(dir.path / "ba_cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs",
                                 ",\n  \"transfer\": {\"kind\": \"icc\", \"lambda\": 0.5},\n"
                                 "  \"scenario\": \"equal\", \"generations\": 4"));
    const auto r = run_cli("born-again --config " + (dir.path / "ba_cfg.json").string());
    ASSERT_EQ(r.exit_code, 0) << r.output;
    const std::string summary = slurp(dir.path / "runs/summary_born_again.csv");
    EXPECT_NE(summary.find("Baseline,"), std::string::npos);
    for (int g = 1; g <= 4; ++g)
        EXPECT_NE(summary.find("Gen #" + std::to_string(g) + ","), std::string::npos) << summary;
    EXPECT_TRUE(fs::exists(dir.path / "runs/ba_gen4_seed1.ckpt"));
}

TEST(Cli, GradcheckPassesAndPrintsReports) {
    const auto r = run_cli("gradcheck");
    EXPECT_EQ(r.exit_code, 0) << r.output;
    EXPECT_NE(r.output.find("PASS"), std::string::npos);
    EXPECT_EQ(r.output.find("FAIL"), std::string::npos) << r.output;
}

TEST(Cli, GradcheckImpossibleToleranceIsNumericError) {
    // Finite differences cannot match to 1e-15; the failure path must
    // name the worst offender and exit with the numeric-error code.
    const auto r = run_cli("gradcheck --tolerance 1e-15");
    EXPECT_EQ(r.exit_code, icct::kExitNumeric) << r.output;
    EXPECT_NE(r.output.find("worst offender"), std::string::npos);
}

TEST(Cli, DivergedDistillExitsRunErrorButKeepsReports) {
    TempDir dir("icct_cli_diverge");
    write_file(dir.path / "spec.json", kSynthSpec);
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                      (dir.path / "data").string())
                  .exit_code,
              0);
    std::string teacher_cfg = experiment_config(dir.path / "data", dir.path / "teach", "");
    teacher_cfg.replace(teacher_cfg.find("[6, 10, 4]"), 10, "[6, 24, 4]");
    write_file(dir.path / "teacher_cfg.json", teacher_cfg);
    ASSERT_EQ(run_cli("train --config " + (dir.path / "teacher_cfg.json").string()).exit_code, 0);

    // Oversized lambda drives the student's logits to overflow.
    write_file(dir.path / "distill_cfg.json",
               experiment_config(dir.path / "data", dir.path / "runs",
                                 ",\n  \"teacher\": {\"layers\": [6, 24, 4]},\n"
                                 "  \"transfer\": {\"kind\": \"icc\", \"lambda\": 500.0}"));
    const auto r = run_cli("distill --config " + (dir.path / "distill_cfg.json").string() +
                           " --teacher " + (dir.path / "teach/train_seed1.ckpt").string());
    EXPECT_EQ(r.exit_code, icct::kExitRun) << r.output;
    EXPECT_NE(r.output.find("diverged"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir.path / "runs/distill_icc_seed1.csv")); // partial reports kept
}

TEST(Cli, ReportOverSingleBaselineIsOneRow) {
    TempDir dir("icct_cli_report_one");
    write_file(dir.path / "spec.json", kSynthSpec);
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                      (dir.path / "data").string())
                  .exit_code,
              0);
    std::string cfg = experiment_config(dir.path / "data", dir.path / "runs", "");
    cfg.replace(cfg.find("[1, 2]"), 6, "[1]"); // one seed
    write_file(dir.path / "cfg.json", cfg);
    ASSERT_EQ(run_cli("train --config " + (dir.path / "cfg.json").string()).exit_code, 0);
    ASSERT_EQ(run_cli("report --runs " + (dir.path / "runs").string() + " --out " +
                      (dir.path / "report.csv").string())
                  .exit_code,
              0);
    std::istringstream table(slurp(dir.path / "report.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(table, line)) ++lines;
    EXPECT_EQ(lines, 2u); // header + one row
}

TEST(Cli, IccDumpInvariantsAndComparison) {
    TempDir dir("icct_cli_dump");
    write_file(dir.path / "spec.json", kSynthSpec);
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                      (dir.path / "data").string())
                  .exit_code,
              0);
    write_file(dir.path / "cfg_a.json",
               experiment_config(dir.path / "data", dir.path / "runs_a", ""));
    ASSERT_EQ(run_cli("train --config " + (dir.path / "cfg_a.json").string()).exit_code, 0);
    std::string cfg_b = experiment_config(dir.path / "data", dir.path / "runs_b", "");
    cfg_b.replace(cfg_b.find("[6, 10, 4]"), 10, "[6, 24, 4]");
    write_file(dir.path / "cfg_b.json", cfg_b);
    ASSERT_EQ(run_cli("train --config " + (dir.path / "cfg_b.json").string()).exit_code, 0);

    const std::string data_csv = (dir.path / "data/train.csv").string();
    ASSERT_EQ(run_cli("icc-dump --checkpoint " + (dir.path / "runs_a/train_seed1.ckpt").string() +
                      " --data " + data_csv + " --batch 0 --batch-size 32 --out " +
                      (dir.path / "map_a.csv").string())
                  .exit_code,
              0);
    ASSERT_EQ(run_cli("icc-dump --checkpoint " + (dir.path / "runs_b/train_seed1.ckpt").string() +
                      " --data " + data_csv + " --batch 0 --batch-size 32 --out " +
                      (dir.path / "map_b.csv").string())
                  .exit_code,
              0);

    const auto map_a = icct::icc_map_from_csv_text(slurp(dir.path / "map_a.csv"));
    const auto map_b = icct::icc_map_from_csv_text(slurp(dir.path / "map_b.csv"));
    double sum = 0.0;
    for (double x : map_a.entries.data) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    // Two different nets, same batch: similar but not identical maps,
    // and their KL divergence is a finite comparable quantity.
    const double kl = icct::kl_between_maps(map_a, map_b);
    EXPECT_GE(kl, 0.0);
    EXPECT_TRUE(std::isfinite(kl));

    // Out-of-range batch index is a usage error.
    const auto bad = run_cli("icc-dump --checkpoint " +
                             (dir.path / "runs_a/train_seed1.ckpt").string() + " --data " +
                             data_csv + " --batch 9999 --batch-size 32 --out " +
                             (dir.path / "map_x.csv").string());
    EXPECT_EQ(bad.exit_code, icct::kExitUsage) << bad.output;
}

TEST(Cli, IccDumpOfZeroNetIsUniform) {
    TempDir dir("icct_cli_dump0");
    write_file(dir.path / "spec.json", kSynthSpec);
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                      (dir.path / "data").string())
                  .exit_code,
              0);
    // Zero-weight network produces zero logits -> uniform map.
    icct::NetworkParams zero_net;
    zero_net.layers.push_back({icct::Matrix(4, 6), std::vector<double>(4, 0.0)});
    icct::save_checkpoint((dir.path / "zero.ckpt").string(), zero_net);
    ASSERT_EQ(run_cli("icc-dump --checkpoint " + (dir.path / "zero.ckpt").string() + " --data " +
                      (dir.path / "data/train.csv").string() + " --batch 0 --out " +
                      (dir.path / "map.csv").string())
                  .exit_code,
              0);
    const auto map = icct::icc_map_from_csv_text(slurp(dir.path / "map.csv"));
    for (double x : map.entries.data) EXPECT_NEAR(x, 1.0 / 16.0, 1e-12);
}

TEST(Cli, TrainOnCifar10BinaryDirectory) {
    TempDir dir("icct_cli_cifar");
    fs::create_directories(dir.path / "cifar");
    icct::Rng rng(3);
    auto write_batch = [&](const std::string& name, std::size_t records) {
        std::ofstream os((dir.path / "cifar" / name).string(), std::ios::binary);
        for (std::size_t r = 0; r < records; ++r) {
            std::vector<unsigned char> rec(icct::kCifarRecordBytes);
            rec[0] = static_cast<unsigned char>(rng.index(10));
            for (std::size_t j = 0; j < icct::kCifarPixels; ++j)
                rec[1 + j] = static_cast<unsigned char>(rng.index(256));
            os.write(reinterpret_cast<const char*>(rec.data()),
                     static_cast<std::streamsize>(rec.size()));
        }
    };
    for (int b = 1; b <= 5; ++b) write_batch("data_batch_" + std::to_string(b) + ".bin", 16);
    write_batch("test_batch.bin", 8);

    write_file(dir.path / "cfg.json", std::string(R"({
  "data": {"cifar10": ")") + (dir.path / "cifar").string() + R"("},
  "student": {"layers": [3072, 8, 10]},
  "optimizer": {"kind": "adam", "learning_rate": 0.001},
  "epochs": 1, "batch_size": 16,
  "seeds": [1],
  "out_dir": ")" + (dir.path / "runs").string() + "\"\n}");
    const auto r = run_cli("train --config " + (dir.path / "cfg.json").string());
    EXPECT_EQ(r.exit_code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir.path / "runs/train_seed1.csv"));
}

TEST(Cli, ReportOnEmptyDirIsUsageError) {
    TempDir dir("icct_cli_report_empty");
    const auto r = run_cli("report --runs " + dir.path.string());
    EXPECT_EQ(r.exit_code, icct::kExitUsage) << r.output;
}

TEST(Cli, ThreadedSeedRunsMatchSerialRuns) {
    TempDir dir("icct_cli_threads");
    write_file(dir.path / "spec.json", kSynthSpec);
    ASSERT_EQ(run_cli("gen-data --spec " + (dir.path / "spec.json").string() + " --out " +
                      (dir.path / "data").string())
                  .exit_code,
              0);
    write_file(dir.path / "cfg1.json",
               experiment_config(dir.path / "data", dir.path / "serial", ""));
    write_file(dir.path / "cfg2.json",
               experiment_config(dir.path / "data", dir.path / "threaded", ""));
    ASSERT_EQ(run_cli("train --config " + (dir.path / "cfg1.json").string(),
                      "ICCT_THREADS=1")
                  .exit_code,
              0);
    ASSERT_EQ(run_cli("train --config " + (dir.path / "cfg2.json").string(),
                      "ICCT_THREADS=2")
                  .exit_code,
              0);
    EXPECT_EQ(slurp(dir.path / "serial/summary_train.csv"),
              slurp(dir.path / "threaded/summary_train.csv"));
    EXPECT_EQ(slurp(dir.path / "serial/train_seed1.csv"),
              slurp(dir.path / "threaded/train_seed1.csv"));
    EXPECT_EQ(slurp(dir.path / "serial/train_seed2.csv"),
              slurp(dir.path / "threaded/train_seed2.csv"));
}
