// Subcommand implementations behind the pruneseg command-line tool:
// synth, train, prune-sweep, merge, eval, report. Kept as plain functions
// over option structs so the test suite can drive the exact code paths the
// binary runs. Exit codes: 0 success, 2 validation error, 3 I/O error,
// 4 partial sweep stopped by connectivity loss, 1 anything unexpected.
#pragma once

#include <filesystem>
#include <iostream>
#include <set>

#include <json.hpp>

#include "pruneseg/flops.hpp"
#include "pruneseg/io.hpp"
#include "pruneseg/merge.hpp"
#include "pruneseg/metrics.hpp"
#include "pruneseg/prune.hpp"
#include "pruneseg/synth.hpp"
#include "pruneseg/train.hpp"

namespace pruneseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitConnectivity = 4;

namespace detail {

inline Tensor to_plane(const Tensor& chw) {  // [1,H,W] -> [H,W]
    return Tensor({chw.dim(1), chw.dim(2)}, chw.data);
}
inline Tensor to_chw(const Tensor& plane) {  // [H,W] -> [1,H,W]
    return Tensor({1, plane.dim(0), plane.dim(1)}, plane.data);
}

inline LabelMap labelmap_from_tensor_threshold(const Tensor& prob, float thr) {
    LabelMap lm(prob.dim(prob.shape.size() == 3 ? 1 : 0), prob.dim(prob.shape.size() == 3 ? 2 : 1));
    for (size_t i = 0; i < lm.size(); ++i) lm.labels[i] = prob.data[i] > thr ? 1 : 0;
    return lm;
}

template <class Fn>
inline int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ConnectivityLoss& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConnectivity;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}

inline json load_manifest(const fs::path& data_dir) {
    const fs::path p = data_dir / "manifest.json";
    std::ifstream in(p);
    if (!in) throw IoError(IoErrorKind::io_failure, "cannot open " + p.string());
    json m = json::parse(in, nullptr, /*allow_exceptions=*/true);
    if (m.value("format", "") != "pruneseg-scenes")
        throw IoError(IoErrorKind::schema_mismatch, p.string() + ": not a scene manifest");
    return m;
}

struct StoredScene {
    Tensor image;     // [1,H,W]
    Tensor binary;    // [1,H,W]
    Tensor distance;  // [1,H,W]
    LabelMap instances;
};

inline StoredScene load_scene_dir(const fs::path& dir) {
    StoredScene s;
    s.image = to_chw(load_floatmap((dir / "image.pfm").string()));
    s.binary = to_chw(load_floatmap((dir / "binary.pfm").string()));
    s.distance = to_chw(load_floatmap((dir / "distance.pfm").string()));
    s.instances = load_labelmap((dir / "instances.pgm").string());
    return s;
}

inline std::vector<StoredScene> load_split(const fs::path& data_dir, const std::string& split) {
    const json manifest = load_manifest(data_dir);
    std::vector<StoredScene> scenes;
    for (const auto& entry : manifest.at("scenes"))
        if (entry.at("split").get<std::string>() == split)
            scenes.push_back(load_scene_dir(data_dir / entry.at("dir").get<std::string>()));
    if (scenes.empty())
        throw std::invalid_argument("no '" + split + "' scenes found in " + data_dir.string());
    return scenes;
}

inline Head head_for_branch(const std::string& branch) {
    if (branch == "seg") return Head::sigmoid;
    if (branch == "reg") return Head::linear;
    throw std::invalid_argument("branch must be 'seg' or 'reg', got '" + branch + "'");
}

inline PruneMethod parse_method(const std::string& m) {
    if (m == "layerwise") return PruneMethod::layerwise;
    if (m == "networkwide") return PruneMethod::networkwide;
    throw std::invalid_argument("method must be 'layerwise' or 'networkwide', got '" + m + "'");
}

}  // namespace detail

// --- synth -------------------------------------------------------------------

struct SynthOpts {
    std::string out;
    int count = 16;
    int size = 64;
    std::string dist = "base";
    uint64_t seed = 0;
    double split = 0.75;
    bool force = false;
};

inline int cmd_synth(const SynthOpts& o) {
    return detail::guarded([&] {
        if (o.dist != "base" && o.dist != "shifted")
            throw std::invalid_argument("--dist must be 'base' or 'shifted', got '" + o.dist + "'");
        if (o.size < 16 || o.size % 4 != 0)
            throw std::invalid_argument("--size must be >= 16 and divisible by 4");
        const fs::path out(o.out);
        if (fs::exists(out) && !fs::is_empty(out) && !o.force)
            throw std::invalid_argument(o.out + " exists and is not empty (use --force)");
        fs::create_directories(out);

        SceneConfig cfg = o.dist == "base" ? SceneConfig::base_default(o.seed)
                                           : SceneConfig::shifted_default(o.seed);
        cfg.height = cfg.width = o.size;
        const Dataset ds = make_dataset(cfg, o.count, o.split);

        json manifest;
        manifest["format"] = "pruneseg-scenes";
        manifest["distribution"] = o.dist;
        manifest["master_seed"] = o.seed;
        manifest["count"] = o.count;
        manifest["height"] = o.size;
        manifest["width"] = o.size;
        manifest["split"] = o.split;
        manifest["scenes"] = json::array();

        int index = 0;
        auto emit = [&](const Scene& scene, uint64_t seed, const char* split) {
            char name[32];
            std::snprintf(name, sizeof(name), "scene_%03d", index++);
            const fs::path dir = out / name;
            fs::create_directories(dir);
            save_floatmap((dir / "image.pfm").string(), detail::to_plane(scene.image));
            save_floatmap((dir / "binary.pfm").string(), detail::to_plane(scene.binary));
            save_floatmap((dir / "distance.pfm").string(), detail::to_plane(scene.distance));
            save_labelmap((dir / "instances.pgm").string(), scene.instances);
            manifest["scenes"].push_back(
                {{"dir", name}, {"seed", seed}, {"split", split},
                 {"instances", scene.instances.max_label()}});
        };
        for (size_t i = 0; i < ds.train.size(); ++i) emit(ds.train[i], ds.train_seeds[i], "train");
        for (size_t i = 0; i < ds.test.size(); ++i) emit(ds.test[i], ds.test_seeds[i], "test");

        std::ofstream mf(out / "manifest.json");
        mf << manifest.dump(2) << "\n";
        if (!mf) throw IoError(IoErrorKind::io_failure, "cannot write manifest.json");
        std::cout << "wrote " << o.count << " scenes to " << o.out << "\n";
        return kExitOk;
    });
}

// --- train -------------------------------------------------------------------

struct TrainOpts {
    std::string branch;  // seg | reg
    std::string data;
    std::string out;
    int epochs = 300;
    double lr = 0.001;
    int batch = 2;
    double min_lr = 0.0;
    uint64_t seed = 0;
    bool no_augment = false;
    bool early_stop = false;
};

inline int cmd_train(const TrainOpts& o) {
    return detail::guarded([&] {
        const Head head = detail::head_for_branch(o.branch);
        TrainConfig cfg;
        cfg.epochs = o.epochs;
        cfg.initial_lr = static_cast<float>(o.lr);
        cfg.min_lr = static_cast<float>(o.min_lr);
        cfg.batch_size = o.batch;
        cfg.seed = o.seed;
        cfg.augment_flips = !o.no_augment;
        cfg.early_stop = o.early_stop;
        cfg.validate();

        const auto scenes = detail::load_split(o.data, "train");
        std::vector<Sample> samples;
        for (const auto& s : scenes)
            samples.push_back({s.image, head == Head::sigmoid ? s.binary : s.distance});

        Network net = build_toy_network(head, o.seed);
        const std::vector<double> history = train(net, samples, cfg);
        save_network(o.out, net);

        const fs::path out(o.out);
        const fs::path loss_path = out.parent_path() / (out.stem().string() + "_loss.csv");
        std::string csv = "epoch,loss\n";
        for (size_t e = 0; e < history.size(); ++e)
            csv += std::to_string(e) + "," + format_float(history[e]) + "\n";
        pruneseg::detail::write_file(loss_path.string(), csv);

        std::cout << "trained " << o.branch << " for " << history.size() << " epochs, final loss "
                  << format_float(history.back()) << ", model at " << o.out << "\n";
        return kExitOk;
    });
}

// --- prune-sweep ---------------------------------------------------------------

struct SweepOpts {
    std::string model;
    std::string branch;  // seg | reg
    std::string method;  // layerwise | networkwide
    int max_cr = 8;
    int retrain_epochs = 150;
    std::string data;
    std::string out;
    double lr = 0.001;
    int batch = 2;
    uint64_t seed = 0;
    bool force = false;
};

inline int cmd_prune_sweep(const SweepOpts& o) {
    return detail::guarded([&] {
        const Head head = detail::head_for_branch(o.branch);
        const PruneMethod method = detail::parse_method(o.method);
        if (!is_power_of_two(o.max_cr) || o.max_cr < 2)
            throw std::invalid_argument("--max-cr must be a power of two >= 2, got " +
                                        std::to_string(o.max_cr));
        const fs::path out(o.out);
        if (fs::exists(out) && !fs::is_empty(out) && !o.force)
            throw std::invalid_argument(o.out + " exists and is not empty (use --force)");
        fs::create_directories(out);

        Network net = load_network(o.model, head);
        const auto scenes = detail::load_split(o.data, "train");
        std::vector<Sample> samples;
        for (const auto& s : scenes)
            samples.push_back({s.image, head == Head::sigmoid ? s.binary : s.distance});
        const int input_h = samples.front().image.dim(1);
        const int input_w = samples.front().image.dim(2);

        TrainConfig retrain;
        retrain.epochs = o.retrain_epochs;
        retrain.initial_lr = static_cast<float>(o.lr);
        retrain.batch_size = o.batch;
        retrain.seed = o.seed;
        retrain.validate();

        json sweep;
        sweep["format"] = "pruneseg-sweep";
        sweep["branch"] = o.branch;
        sweep["method"] = o.method;
        sweep["max_cr"] = o.max_cr;
        sweep["retrain_epochs"] = o.retrain_epochs;
        sweep["seed"] = o.seed;
        sweep["partial"] = false;
        sweep["crs"] = json::array();

        auto save_checkpoint = [&](int cr, const Network& n) {
            char stem[32];
            std::snprintf(stem, sizeof(stem), "model_cr%d", cr);
            save_network((out / (std::string(stem) + ".prnw")).string(), n);
            const SparsityReport sp = sparsity_report(n);
            json sj;
            sj["cr"] = cr;
            sj["global_sparsity"] = sp.global_sparsity;
            sj["total"] = sp.total;
            sj["nonzero"] = sp.nonzero;
            sj["layers"] = json::array();
            for (const auto& l : sp.layers)
                sj["layers"].push_back({{"name", l.name}, {"total", l.total}, {"nonzero", l.nonzero}});
            const SpeedupReport su = theoretical_speedup(n, input_h, input_w, cr);
            json uj;
            uj["cr"] = su.cr;
            uj["dense_flops"] = su.dense_flops;
            uj["sparse_flops"] = su.sparse_flops;
            uj["speedup"] = su.speedup;
            std::ofstream sf(out / (std::string(stem) + ".sparsity.json"));
            sf << sj.dump(2) << "\n";
            std::ofstream uf(out / (std::string(stem) + ".speedup.json"));
            uf << uj.dump(2) << "\n";
            sweep["crs"].push_back(cr);
        };

        save_checkpoint(1, net);  // baseline

        int exit_code = kExitOk;
        const int iterations = static_cast<int>(std::lround(std::log2(o.max_cr)));
        try {
            for (int k = 1; k <= iterations; ++k) {
                const float target = 1.0f - std::ldexp(1.0f, -k);
                auto masks = method == PruneMethod::layerwise ? prune_layerwise(net, target)
                                                              : prune_networkwide(net, target);
                for (auto& [name, mask] : masks) net.masks[name] = std::move(mask);
                net.apply_masks();
                train(net, samples, retrain);
                save_checkpoint(1 << k, net);
                std::cout << "checkpoint CR=" << (1 << k) << " sparsity "
                          << format_float(sparsity_report(net).global_sparsity) << "\n";
            }
        } catch (const ConnectivityLoss& e) {
            std::cerr << "sweep stopped early: " << e.what() << "\n";
            sweep["partial"] = true;
            exit_code = kExitConnectivity;
        }

        std::ofstream mf(out / "sweep.json");
        mf << sweep.dump(2) << "\n";
        if (!mf) throw IoError(IoErrorKind::io_failure, "cannot write sweep.json");
        return exit_code;
    });
}

// --- merge ---------------------------------------------------------------------

struct MergeOpts {
    std::string seg;   // seg probability .pfm
    std::string dist;  // predicted distance .pfm
    std::string out;   // labels .pgm
    int min_area = 30;
    double sigma_scale = 0.5;
    double seg_threshold = 0.5;
    double maxima_rel_threshold = 0.1;
};

inline int cmd_merge(const MergeOpts& o) {
    return detail::guarded([&] {
        const Tensor seg_prob = load_floatmap(o.seg);
        const Tensor dist_pred = load_floatmap(o.dist);
        MergeConfig cfg;
        cfg.min_area = o.min_area;
        cfg.sigma_scale = static_cast<float>(o.sigma_scale);
        cfg.seg_threshold = static_cast<float>(o.seg_threshold);
        cfg.maxima_rel_threshold = static_cast<float>(o.maxima_rel_threshold);
        const LabelMap lm = merge(seg_prob, dist_pred, cfg);
        save_labelmap(o.out, lm);
        std::cout << "merged " << lm.max_label() << " instances to " << o.out << "\n";
        return kExitOk;
    });
}

// --- eval ----------------------------------------------------------------------

struct EvalOpts {
    std::string pred;
    std::string gt;
    std::string out;
    std::string run_id = "eval";
};

inline int cmd_eval(const EvalOpts& o) {
    return detail::guarded([&] {
        const LabelMap pred = load_labelmap(o.pred);
        const LabelMap gt = load_labelmap(o.gt);
        Tensor pb({pred.height, pred.width}), gb({gt.height, gt.width});
        for (size_t i = 0; i < pred.size(); ++i) pb.data[i] = pred.labels[i] != 0 ? 1.0f : 0.0f;
        for (size_t i = 0; i < gt.size(); ++i) gb.data[i] = gt.labels[i] != 0 ? 1.0f : 0.0f;

        MetricsReport row;
        row.run_id = o.run_id;
        row.branch = "eval";
        row.method = "labelmap";
        row.cr = 1;
        row.dice = dice(pb, gb);
        row.mse = mse(pb, gb);
        row.aji = aji(gt, pred);
        row.pq = pq(gt, pred).pq;
        row.sparsity = 0.0;
        row.speedup = 1.0;
        write_results_csv(o.out, {row});
        std::cout << "dice " << format_float(row.dice) << ", aji " << format_float(row.aji)
                  << ", pq " << format_float(row.pq) << "\n";
        return kExitOk;
    });
}

// --- report --------------------------------------------------------------------

struct ReportOpts {
    std::string sweep;  // directory containing one subdirectory per sweep
    std::string data;
    std::string out;
    std::string run_id;  // defaults to the sweep directory name
};

inline int cmd_report(const ReportOpts& o) {
    return detail::guarded([&] {
        const fs::path root(o.sweep);
        if (!fs::is_directory(root))
            throw IoError(IoErrorKind::io_failure, o.sweep + " is not a directory");
        const std::string run_id = o.run_id.empty() ? root.filename().string() : o.run_id;

        // (method, branch) -> sweep dir + crs
        struct SweepInfo {
            fs::path dir;
            std::vector<int> crs;
        };
        std::map<std::pair<std::string, std::string>, SweepInfo> sweeps;
        std::vector<fs::path> subdirs;
        for (const auto& entry : fs::directory_iterator(root))
            if (entry.is_directory() && fs::exists(entry.path() / "sweep.json"))
                subdirs.push_back(entry.path());
        std::sort(subdirs.begin(), subdirs.end());
        for (const auto& dir : subdirs) {
            std::ifstream in(dir / "sweep.json");
            const json sj = json::parse(in);
            SweepInfo info;
            info.dir = dir;
            for (int cr : sj.at("crs")) info.crs.push_back(cr);
            sweeps[{sj.at("method"), sj.at("branch")}] = std::move(info);
        }
        if (sweeps.empty())
            throw std::invalid_argument("no sweeps (sweep.json) found under " + o.sweep);

        std::set<std::string> methods;
        for (const auto& [key, info] : sweeps) methods.insert(key.first);

        const auto scenes = detail::load_split(o.data, "test");
        const int input_h = scenes.front().image.dim(1);
        const int input_w = scenes.front().image.dim(2);

        std::vector<MetricsReport> rows;
        for (const std::string& method : methods) {
            const auto seg_it = sweeps.find({method, "seg"});
            const auto reg_it = sweeps.find({method, "reg"});
            if (seg_it == sweeps.end() || reg_it == sweeps.end())
                throw std::invalid_argument("method '" + method +
                                            "' needs both seg and reg sweeps under " + o.sweep);
            for (int cr : seg_it->second.crs) {
                const auto& reg_crs = reg_it->second.crs;
                if (std::find(reg_crs.begin(), reg_crs.end(), cr) == reg_crs.end())
                    throw std::invalid_argument("method '" + method + "': reg sweep is missing CR " +
                                                std::to_string(cr));
                const std::string model = "model_cr" + std::to_string(cr) + ".prnw";
                const Network seg_net =
                    load_network((seg_it->second.dir / model).string(), Head::sigmoid);
                const Network reg_net =
                    load_network((reg_it->second.dir / model).string(), Head::linear);

                double dice_sum = 0, mse_sum = 0, aji_sum = 0, pq_sum = 0;
                for (const auto& scene : scenes) {
                    const Tensor seg_prob = predict(seg_net, scene.image);
                    const Tensor dist_pred = predict(reg_net, scene.image);
                    Tensor seg_bin = seg_prob;
                    for (float& v : seg_bin.data) v = v > 0.5f ? 1.0f : 0.0f;
                    dice_sum += dice(seg_bin, scene.binary);
                    mse_sum += mse(dist_pred, scene.distance);
                    const LabelMap merged =
                        merge(detail::to_plane(seg_prob), detail::to_plane(dist_pred), MergeConfig{});
                    aji_sum += aji(scene.instances, merged);
                    pq_sum += pq(scene.instances, merged).pq;
                }
                const double n = static_cast<double>(scenes.size());
                for (const std::string branch : {"seg", "reg"}) {
                    const Network& net = branch == "seg" ? seg_net : reg_net;
                    MetricsReport row;
                    row.run_id = run_id;
                    row.branch = branch;
                    row.method = method;
                    row.cr = cr;
                    row.sparsity = sparsity_report(net).global_sparsity;
                    row.speedup = theoretical_speedup(net, input_h, input_w, cr).speedup;
                    row.dice = dice_sum / n;
                    row.mse = mse_sum / n;
                    row.aji = aji_sum / n;
                    row.pq = pq_sum / n;
                    rows.push_back(std::move(row));
                }
            }
        }
        write_results_csv(o.out, rows);
        std::cout << "wrote " << rows.size() << " rows to " << o.out << "\n";
        return kExitOk;
    });
}

}  // namespace pruneseg::cli
