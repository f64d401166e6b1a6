#include "motionkit/kernels.hpp"
#include "motionkit/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace motionkit;

int main(int argc, char** argv) {
    CLI::App app{"motionkit: synthetic multi-sensor capture, annotation refinement and evaluation"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);

    SynthCommand synth;
    std::uint64_t synth_seed = 0;
    auto* s = app.add_subcommand("synth", "Generate a synthetic sensor bundle");
    s->add_option("--config", synth.spec_file, "Synth spec JSON (default spec if omitted)");
    s->add_option("--out", synth.out_dir, "Output bundle directory")->required();
    auto* s_seed = s->add_option("--seed", synth_seed, "Override the spec seed");

    RunCommand run;
    std::uint64_t run_seed = 0;
    auto* r = app.add_subcommand("run", "Sync, initialize, optimize and evaluate a bundle");
    r->add_option("--config", run.config_file, "Pipeline config JSON")->required();
    auto* r_seed = r->add_option("--seed", run_seed, "Override the config seed");
    r->add_flag("--no-contact", run.ablation.no_contact, "Drop the contact loss");
    r->add_flag("--no-smooth", run.ablation.no_smooth, "Drop the smoothness loss");
    r->add_flag("--no-geo", run.ablation.no_geo, "Drop the geometry loss");
    r->add_flag("--json", run.json, "Print the report as JSON");

    EvalCommand eval;
    auto* e = app.add_subcommand("eval", "Score a predicted motion against ground truth");
    e->add_option("--pred", eval.pred_file, "Predicted motion JSON")->required();
    e->add_option("--gt", eval.gt_file, "Ground-truth motion JSON")->required();
    e->add_option("--body", eval.body_file, "Body model JSON (standard body if omitted)");
    e->add_option("--out", eval.out_file, "Also write the JSON report here");
    e->add_flag("--json", eval.json, "Print the report as JSON");

    FuseCommand fuse;
    auto* f = app.add_subcommand("fuse-demo", "Run the three-stream fusion on feature CSVs");
    f->add_option("--features", fuse.features_dir, "Directory with lidar.csv, rgb.csv, event.csv")->required();
    f->add_option("--out", fuse.out_file, "Output CSV (default <features>/fused.csv)");
    f->add_option("--seed", fuse.seed, "Weight initialization seed");
    f->add_option("--weights", fuse.preset, "Weights preset when no weights.bin is present")
        ->check(CLI::IsMember({"random", "residual-zero"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kExitValidation;
    }
    if (threads > 0) kernels::set_threads(threads);

    if (s->parsed()) {
        if (*s_seed) synth.seed = synth_seed;
        return cmd_synth(synth, std::cout, std::cerr);
    }
    if (r->parsed()) {
        if (*r_seed) run.seed = run_seed;
        return cmd_run(run, std::cout, std::cerr);
    }
    if (e->parsed()) return cmd_eval(eval, std::cout, std::cerr);
    return cmd_fuse_demo(fuse, std::cout, std::cerr);
}
