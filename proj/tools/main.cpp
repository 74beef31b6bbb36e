// pruneseg command-line tool: generate synthetic scenes, train the two
// branches, run iterative pruning sweeps, merge branch outputs into instance
// masks, and evaluate/report metrics as CSV.
#include <CLI11.hpp>

#include "pruneseg/cli.hpp"

using namespace pruneseg;

int main(int argc, char** argv) {
    CLI::App app{"nucleus segmentation pruning toolkit"};
    app.require_subcommand(1);

    cli::SynthOpts synth;
    auto* s = app.add_subcommand("synth", "generate a synthetic scene dataset");
    s->add_option("--out", synth.out, "output directory")->required();
    s->add_option("--count", synth.count, "number of scenes");
    s->add_option("--size", synth.size, "square scene size in pixels");
    s->add_option("--dist", synth.dist, "distribution: base or shifted");
    s->add_option("--seed", synth.seed, "master seed");
    s->add_option("--split", synth.split, "train fraction");
    s->add_flag("--force", synth.force, "overwrite a non-empty output directory");

    cli::TrainOpts train;
    auto* t = app.add_subcommand("train", "train one branch on a scene dataset");
    t->add_option("--branch", train.branch, "seg or reg")->required();
    t->add_option("--data", train.data, "scene dataset directory")->required();
    t->add_option("--out", train.out, "output model path (.prnw)")->required();
    t->add_option("--epochs", train.epochs, "training epochs");
    t->add_option("--lr", train.lr, "initial learning rate");
    t->add_option("--batch", train.batch, "batch size");
    t->add_option("--min-lr", train.min_lr, "final learning rate");
    t->add_option("--seed", train.seed, "seed for init, shuffles and flips");
    t->add_flag("--no-augment", train.no_augment, "disable flip augmentation");
    t->add_flag("--early-stop", train.early_stop, "stop after 20 stale epochs");

    cli::SweepOpts sweep;
    auto* p = app.add_subcommand("prune-sweep", "iterative magnitude pruning sweep");
    p->add_option("--model", sweep.model, "trained model (.prnw)")->required();
    p->add_option("--branch", sweep.branch, "seg or reg (selects the retraining loss)")->required();
    p->add_option("--method", sweep.method, "layerwise or networkwide")->required();
    p->add_option("--max-cr", sweep.max_cr, "largest compression ratio (power of two)");
    p->add_option("--retrain-epochs", sweep.retrain_epochs, "epochs per retraining round");
    p->add_option("--data", sweep.data, "scene dataset directory")->required();
    p->add_option("--out", sweep.out, "output directory for checkpoints")->required();
    p->add_option("--lr", sweep.lr, "retraining learning rate");
    p->add_option("--batch", sweep.batch, "retraining batch size");
    p->add_option("--seed", sweep.seed, "retraining seed");
    p->add_flag("--force", sweep.force, "overwrite a non-empty output directory");

    cli::MergeOpts merge;
    auto* m = app.add_subcommand("merge", "merge branch outputs into instance masks");
    m->add_option("--seg", merge.seg, "segmentation probability map (.pfm)")->required();
    m->add_option("--dist", merge.dist, "predicted distance map (.pfm)")->required();
    m->add_option("--out", merge.out, "output label map (.pgm)")->required();
    m->add_option("--min-area", merge.min_area, "minimum instance area in pixels");
    m->add_option("--sigma-scale", merge.sigma_scale, "Gaussian sigma scale");
    m->add_option("--seg-threshold", merge.seg_threshold, "foreground threshold");
    m->add_option("--maxima-threshold", merge.maxima_rel_threshold,
                  "relative local-maxima threshold");

    cli::EvalOpts eval;
    auto* e = app.add_subcommand("eval", "compare a predicted label map with ground truth");
    e->add_option("--pred", eval.pred, "predicted label map (.pgm)")->required();
    e->add_option("--gt", eval.gt, "ground-truth label map (.pgm)")->required();
    e->add_option("--out", eval.out, "output CSV")->required();
    e->add_option("--run-id", eval.run_id, "run id column value");

    cli::ReportOpts report;
    auto* r = app.add_subcommand("report", "evaluate sweep checkpoints and write the results CSV");
    r->add_option("--sweep", report.sweep, "directory containing sweep subdirectories")->required();
    r->add_option("--data", report.data, "scene dataset directory")->required();
    r->add_option("--out", report.out, "output CSV")->required();
    r->add_option("--run-id", report.run_id, "run id column value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return cli::kExitValidation;
    }

    if (s->parsed()) return cli::cmd_synth(synth);
    if (t->parsed()) return cli::cmd_train(train);
    if (p->parsed()) return cli::cmd_prune_sweep(sweep);
    if (m->parsed()) return cli::cmd_merge(merge);
    if (e->parsed()) return cli::cmd_eval(eval);
    if (r->parsed()) return cli::cmd_report(report);
    return cli::kExitValidation;
}
