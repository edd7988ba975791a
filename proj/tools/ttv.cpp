// ttv: command-line front end for the tension-aware music VAE toolkit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ttv/ttv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::optional<std::uint64_t> rng_seed;
    std::string config;
    bool verbose = false;
    bool json = false;
};

void log(const Globals& g, const std::string& msg) {
    if (g.verbose) std::cerr << msg << '\n';
}

void write_text(const std::string& path, const std::string& text) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ttv::InvalidInput("cannot write " + path);
    f << text;
}

void emit(const Globals& g, const json& summary, const std::string& text) {
    if (g.json)
        std::cout << summary.dump(2) << '\n';
    else if (!text.empty())
        std::cout << text << '\n';
}

ttv::vae::ModelConfig load_config(const Globals& g) {
    ttv::vae::ModelConfig cfg;
    if (!g.config.empty()) {
        std::ifstream f(g.config);
        if (!f) throw ttv::InvalidInput("cannot open config " + g.config);
        const auto j = json::parse(f, nullptr, false);
        if (j.is_discarded()) throw ttv::InvalidInput("config is not valid JSON: " + g.config);
        cfg = j.get<ttv::vae::ModelConfig>();
    }
    if (g.rng_seed) cfg.rng_seed = *g.rng_seed;
    cfg.validate();
    return cfg;
}

std::vector<ttv::generate::Edit> parse_edits(const std::vector<std::string>& specs) {
    std::vector<ttv::generate::Edit> edits;
    for (const auto& s : specs) {
        const auto eq = s.rfind('=');
        if (eq == std::string::npos || eq == 0) throw ttv::InvalidInput("edit must look like NAME=ALPHA: " + s);
        try {
            std::size_t used = 0;
            const double a = std::stod(s.substr(eq + 1), &used);
            if (used != s.size() - eq - 1) throw std::invalid_argument(s);
            edits.emplace_back(s.substr(0, eq), a);
        } catch (const std::logic_error&) {
            throw ttv::InvalidInput("edit scale is not a number: " + s);
        }
    }
    return edits;
}

std::string fixed6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string input, out, melody, bass;
};

int run_analyze(const Globals& g, const AnalyzeArgs& a) {
    ttv::corpus::ExtractOptions opt;
    opt.melody_track = a.melody;
    opt.bass_track = a.bass;
    const auto song = ttv::dataset::process_song(ttv::midi::read_file(a.input), fs::path(a.input).filename().string(), opt);
    for (const auto& w : song.warnings) log(g, "warning: " + w);
    if (song.fragments.empty()) throw ttv::InvalidSong("no 4-bar fragment with both melody and bass in " + a.input);

    std::ostringstream csv;
    json frags = json::array();
    for (std::size_t i = 0; i < song.fragments.size(); ++i) {
        const auto& f = song.fragments[i];
        const auto tc = ttv::spiral::tension_curves(f.roll);
        csv << "# fragment " << i << " bar_offset=" << f.bar_offset << " key=" << ttv::corpus::to_string(song.key) << '\n';
        csv << "step,tensile_strain,cloud_diameter\n";
        json steps = json::array();
        for (int t = 0; t < ttv::layout::kSteps; ++t) {
            csv << t << ',' << fixed6(tc.tensile.values[t]) << ',' << fixed6(tc.diameter.values[t]) << '\n';
            steps.push_back({{"step", t},
                             {"tensile_strain", json::parse(fixed6(tc.tensile.values[t]))},
                             {"cloud_diameter", json::parse(fixed6(tc.diameter.values[t]))}});
        }
        frags.push_back({{"fragment", i}, {"bar_offset", f.bar_offset}, {"steps", steps}});
    }
    const json doc = {{"source", a.input}, {"key", ttv::corpus::to_string(song.key)}, {"fragments", frags}};
    const std::string text = g.json ? doc.dump(2) + "\n" : csv.str();
    if (a.out.empty())
        std::cout << text;
    else
        write_text(a.out, text);
    return 0;
}

struct PreprocessArgs {
    std::string in, out, melody, bass;
};

int run_preprocess(const Globals& g, const PreprocessArgs& a) {
    ttv::corpus::ExtractOptions opt;
    opt.melody_track = a.melody;
    opt.bass_track = a.bass;
    const auto ds = ttv::dataset::build_dataset(a.in, opt);
    for (const auto& s : ds.skipped) log(g, "skipped " + s.file + ": " + s.reason);
    for (const auto& w : ds.warnings) log(g, "warning: " + w);
    if (ds.fragments.empty()) throw ttv::InvalidInput("no fragments extracted from " + a.in);
    ttv::dataset::save(ds, a.out);
    emit(g, {{"dataset", a.out}, {"fragments", ds.size()}, {"skipped", ds.skipped.size()}},
         std::to_string(ds.size()) + " fragments written to " + a.out + " (" + std::to_string(ds.skipped.size()) +
             " files skipped)");
    return 0;
}

struct TrainArgs {
    std::string dataset, out;
};

int run_train(const Globals& g, const TrainArgs& a) {
    const auto cfg = load_config(g);
    const auto ds = ttv::dataset::load(a.dataset);
    ttv::train::TrainOptions opt;
    opt.on_epoch = [&](int epoch, const std::vector<ttv::train::LedgerRow>& rows) {
        if (!g.verbose) return;
        const auto& v = rows.back().loss;
        std::cerr << "epoch " << epoch << " valid total " << v.total << '\n';
    };
    const auto res = ttv::train::train(ds, cfg, opt);
    fs::create_directories(a.out);
    write_text((fs::path(a.out) / "ledger.csv").string(), ttv::train::ledger_csv(res.ledger));
    const ttv::checkpoint::ScheduleState sched{res.global_batch, res.final_beta, res.epochs_run, res.best_epoch};
    const auto id = ttv::checkpoint::save(a.out, cfg, res.aborted ? res.last_good : res.best, sched);
    if (res.aborted) throw ttv::NumericFailure("training aborted: " + res.diagnostic + " (last finite weights saved)");
    emit(g,
         {{"checkpoint", a.out}, {"checkpoint_id", id}, {"epochs", res.epochs_run}, {"best_epoch", res.best_epoch},
          {"global_batch", res.global_batch}},
         "trained " + std::to_string(res.epochs_run) + " epochs (best " + std::to_string(res.best_epoch) + "), checkpoint " +
             id + " in " + a.out);
    return 0;
}

struct VectorsArgs {
    std::string model, dataset, kinds = "all", out;
    std::size_t target_n = 1000;
};

std::vector<std::size_t> training_ids(const ttv::vae::ModelConfig& cfg, std::size_t n) {
    return ttv::train::split_indices(n, cfg.split, cfg.rng_seed).train;
}

int run_vectors(const Globals& g, const VectorsArgs& a) {
    using ttv::latent::Label;
    using ttv::spiral::TensionKind;
    const auto ck = ttv::checkpoint::load<float>(a.model);
    const auto ds = ttv::dataset::load(a.dataset);
    const auto ids = training_ids(ck.config, ds.size());
    if (ids.size() < 2) throw ttv::InvalidInput("training split too small for class selection");

    struct Kind {
        TensionKind kind;
        Label label;
    };
    const std::vector<Kind> all{{TensionKind::TensileStrain, Label::Direction},
                                {TensionKind::CloudDiameter, Label::Direction},
                                {TensionKind::TensileStrain, Label::Level},
                                {TensionKind::CloudDiameter, Label::Level}};
    std::vector<Kind> wanted;
    if (a.kinds == "all") {
        wanted = all;
    } else {
        std::stringstream ss(a.kinds);
        for (std::string name; std::getline(ss, name, ',');) {
            bool found = false;
            for (const auto& k : all)
                if (ttv::latent::vector_name(k.kind, k.label) == name) {
                    wanted.push_back(k);
                    found = true;
                }
            if (!found) throw ttv::InvalidInput("unknown vector kind: " + name);
        }
    }
    const auto mu = ttv::latent::posterior_means(ck.params, ds.fragments);
    ttv::latent::VectorSet set{ck.id, ck.config.latent_dim, {}};
    for (const auto& k : wanted) {
        ttv::latent::ExtractRequest req;
        req.kind = k.kind;
        req.label = k.label;
        req.target_n = a.target_n;
        std::string warning;
        set.put(ttv::latent::extract_vector(ds.fragments, ids, mu, req, &warning));
        if (!warning.empty()) std::cerr << "warning: " << warning << '\n';
        log(g, "extracted " + set.vectors.back().name);
    }
    ttv::latent::save(set, a.out);
    json names = json::array();
    for (const auto& v : set.vectors) names.push_back(v.name);
    emit(g, {{"vectors", a.out}, {"names", names}}, std::to_string(set.vectors.size()) + " vectors written to " + a.out);
    return 0;
}

struct ShapeArgs {
    std::string model, dataset, tpl = "triangle", kind = "tensile_strain", out;
    std::size_t target_n = 1000;
};

int run_shape_vector(const Globals& g, const ShapeArgs& a) {
    const auto ck = ttv::checkpoint::load<float>(a.model);
    const auto ds = ttv::dataset::load(a.dataset);
    const auto ids = training_ids(ck.config, ds.size());
    if (a.kind != "tensile_strain" && a.kind != "cloud_diameter") throw ttv::InvalidInput("unknown tension kind: " + a.kind);
    ttv::latent::ExtractRequest req;
    req.kind = a.kind == "cloud_diameter" ? ttv::spiral::TensionKind::CloudDiameter : ttv::spiral::TensionKind::TensileStrain;
    req.label = ttv::latent::Label::Shape;
    req.target_n = a.target_n;
    req.shape = ttv::latent::template_by_name(a.tpl);
    const auto mu = ttv::latent::posterior_means(ck.params, ds.fragments);
    std::string warning;
    auto v = ttv::latent::extract_vector(ds.fragments, ids, mu, req, &warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << '\n';

    // Merge into an existing vectors file from the same checkpoint.
    ttv::latent::VectorSet set{ck.id, ck.config.latent_dim, {}};
    if (fs::exists(a.out)) {
        set = ttv::latent::load(a.out);
        ttv::generate::check_compatible(set, ck.id, ck.config.latent_dim);
    }
    const auto name = v.name;
    set.put(std::move(v));
    ttv::latent::save(set, a.out);
    emit(g, {{"vectors", a.out}, {"name", name}}, name + " written to " + a.out);
    return 0;
}

struct GenerateArgs {
    std::string model, vectors, seed_midi, out, report;
    int fragment_index = 0;
    std::vector<std::string> edits;
};

struct Loaded {
    ttv::checkpoint::Checkpoint<float> ck;
    ttv::latent::VectorSet vectors;
};

Loaded load_model_and_vectors(const std::string& model, const std::string& vectors) {
    Loaded l{ttv::checkpoint::load<float>(model), ttv::latent::load(vectors)};
    ttv::generate::check_compatible(l.vectors, l.ck.id, l.ck.config.latent_dim);
    return l;
}

int run_generate(const Globals& g, const GenerateArgs& a) {
    const auto [ck, vectors] = load_model_and_vectors(a.model, a.vectors);
    ttv::generate::GenerationRequest req;
    if (!a.seed_midi.empty())
        req.seed_midi = a.seed_midi;
    else
        req.sample_seed = g.rng_seed.value_or(0);
    req.fragment_index = a.fragment_index;
    req.edits = parse_edits(a.edits);
    for (const auto& [name, alpha] : req.edits) vectors.at(name);
    auto res = ttv::generate::generate(req, ck.params, vectors);
    res.report["checkpoint_id"] = ck.id;
    const auto report_path = a.report.empty() ? a.out + ".json" : a.report;
    if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    ttv::midi::write_file(a.out, res.midi);
    write_text(report_path, res.report.dump(2) + "\n");
    emit(g, {{"midi", a.out}, {"report", report_path}}, "wrote " + a.out + " and " + report_path);
    return 0;
}

struct ChainArgs {
    std::string model, vectors, plan, seed_midi, out, report;
    int fragment_index = 0;
};

int run_compose_chain(const Globals& g, const ChainArgs& a) {
    const auto [ck, vectors] = load_model_and_vectors(a.model, a.vectors);
    std::ifstream f(a.plan);
    if (!f) throw ttv::InvalidInput("cannot open plan " + a.plan);
    const auto pj = json::parse(f, nullptr, false);
    if (pj.is_discarded()) throw ttv::InvalidInput("plan is not valid JSON: " + a.plan);
    ttv::generate::ChainPlan plan;
    try {
        plan = ttv::generate::plan_from_json(pj);
    } catch (const json::exception& e) {
        throw ttv::InvalidInput(std::string("malformed plan: ") + e.what());
    }
    for (const auto& s : plan.sections)
        for (const auto& [name, alpha] : s.edits) vectors.at(name);
    ttv::generate::GenerationRequest seed;
    if (!a.seed_midi.empty())
        seed.seed_midi = a.seed_midi;
    else
        seed.sample_seed = g.rng_seed.value_or(0);
    seed.fragment_index = a.fragment_index;
    auto res = ttv::generate::compose_chain(plan, ck.params, vectors, ttv::generate::seed_latent(seed, ck.params));
    res.report["checkpoint_id"] = ck.id;
    const auto report_path = a.report.empty() ? a.out + ".json" : a.report;
    if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    ttv::midi::write_file(a.out, res.midi);
    write_text(report_path, res.report.dump(2) + "\n");
    emit(g, {{"midi", a.out}, {"report", report_path}, {"bars", plan.total_bars()}},
         "wrote " + std::to_string(plan.total_bars()) + " bars to " + a.out);
    return 0;
}

struct EvalArgs {
    std::string model, vectors, experiment = "direction", vector, vector_b, out;
    int n = 10000;
    std::vector<double> scales;
    double scale = 6.0;
    bool svg = false;
};

int run_eval(const Globals& g, const EvalArgs& a) {
    const auto [ck, vectors] = load_model_and_vectors(a.model, a.vectors);
    ttv::eval::SweepRequest req;
    req.scales = a.scales;
    req.n = a.n;
    req.rng_seed = g.rng_seed.value_or(0);
    req.thresholds = ttv::eval::Thresholds::from(vectors);
    req.untrained_model = ck.schedule.epochs_trained == 0;
    if (req.untrained_model) std::cerr << "warning: checkpoint has no recorded training; results are flagged\n";
    fs::create_directories(a.out);
    const auto base = (fs::path(a.out) / a.experiment).string();
    auto pick = [&](const std::string& given, const std::string& fallback) -> const ttv::latent::AttributeVector& {
        return vectors.at(given.empty() ? fallback : given);
    };

    json summary;
    if (a.experiment == "direction" || a.experiment == "level") {
        const auto& v = pick(a.vector, "tensile_strain_" + a.experiment);
        const auto rep = ttv::eval::sweep(ck.params, v, req);
        write_text(base + ".csv", ttv::report::sweep_csv(rep));
        summary = ttv::report::sweep_json(rep);
        if (a.svg) write_text(base + ".svg", ttv::report::sweep_svg(rep));
    } else if (a.experiment == "interaction") {
        const auto& va = pick(a.vector, "tensile_strain_direction");
        const auto& vb = pick(a.vector_b, "cloud_diameter_direction");
        const auto rep = ttv::eval::interaction_grid(ck.params, va, vb, req);
        write_text(base + ".csv", ttv::report::interaction_csv(rep));
        summary = ttv::report::interaction_json(rep);
        if (a.svg) write_text(base + ".svg", ttv::report::interaction_svg(rep));
    } else if (a.experiment == "pitch-dist") {
        const auto& v = pick(a.vector, "tensile_strain_direction");
        const auto rep = ttv::eval::pitch_distribution(ck.params, v, a.scale, req);
        write_text(base + ".csv", ttv::report::pitch_distribution_csv(rep));
        summary = ttv::report::pitch_distribution_json(rep);
    } else {
        throw ttv::InvalidInput("unknown experiment: " + a.experiment);
    }
    summary["checkpoint_id"] = ck.id;
    summary["n"] = a.n;
    summary["rng_seed"] = req.rng_seed;
    write_text(base + ".json", summary.dump(2) + "\n");
    emit(g, summary, "wrote " + base + ".csv and " + base + ".json");
    return 0;
}

struct GradcheckArgs {
    int samples = 200;
    double tolerance = 1e-4;
};

int run_gradcheck(const Globals& g, const GradcheckArgs& a) {
    ttv::gradcheck::Options opt;
    opt.samples = a.samples;
    if (g.rng_seed) opt.seed = *g.rng_seed;
    const auto rep = ttv::gradcheck::run_default(opt);
    json terms = json::array();
    std::ostringstream text;
    char buf[256];
    for (const auto& t : rep.terms) {
        terms.push_back({{"term", t.term},
                         {"max_rel_error", t.max_rel_error},
                         {"worst", t.worst_tensor},
                         {"analytic", t.worst_analytic},
                         {"numeric", t.worst_numeric}});
        std::snprintf(buf, sizeof buf, "%-14s max rel err %.3e  (%s)\n", t.term.c_str(), t.max_rel_error, t.worst_tensor.c_str());
        text << buf;
    }
    const bool ok = rep.max_rel_error < a.tolerance;
    std::snprintf(buf, sizeof buf, "%s: max %.3e over %d samples per term (tolerance %.1e)", ok ? "PASS" : "FAIL",
                  rep.max_rel_error, rep.samples_per_term, a.tolerance);
    text << buf;
    emit(g, {{"terms", terms}, {"max_rel_error", rep.max_rel_error}, {"samples_per_term", rep.samples_per_term}, {"pass", ok}},
         text.str());
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tension-aware melody/bass VAE toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--rng-seed", seed, "Seed for every random choice");
    app.add_option("--config", g.config, "Model/training config (JSON)");
    app.add_flag("-v,--verbose", g.verbose, "Progress on stderr");
    app.add_flag("--json", g.json, "Machine-readable output");

    int code = 0;
    auto run = [&](auto fn, const auto& args) {
        return [&, fn] {
            if (seed_opt->count() > 0) g.rng_seed = seed;
            code = fn(g, args);
        };
    };

    AnalyzeArgs an;
    auto* c = app.add_subcommand("analyze", "Tension curves of every 4-bar fragment of a MIDI file");
    c->add_option("midi", an.input)->required()->check(CLI::ExistingFile);
    c->add_option("--out", an.out, "Write here instead of stdout");
    c->add_option("--melody-track", an.melody);
    c->add_option("--bass-track", an.bass);
    c->callback(run(run_analyze, an));

    PreprocessArgs pp;
    c = app.add_subcommand("preprocess", "Build a fragment dataset from a directory of MIDI files");
    c->add_option("--in", pp.in)->required();
    c->add_option("--out", pp.out)->required();
    c->add_option("--melody-track", pp.melody);
    c->add_option("--bass-track", pp.bass);
    c->callback(run(run_preprocess, pp));

    TrainArgs tr;
    c = app.add_subcommand("train", "Train the VAE");
    c->add_option("--dataset", tr.dataset)->required()->check(CLI::ExistingFile);
    c->add_option("--out", tr.out, "Checkpoint directory")->required();
    c->callback(run(run_train, tr));

    VectorsArgs ve;
    c = app.add_subcommand("vectors", "Extract tension attribute vectors");
    c->add_option("--model", ve.model)->required();
    c->add_option("--dataset", ve.dataset)->required()->check(CLI::ExistingFile);
    c->add_option("--kinds", ve.kinds, "all or a comma-separated list of vector names");
    c->add_option("--target-n", ve.target_n);
    c->add_option("--out", ve.out)->required();
    c->callback(run(run_vectors, ve));

    ShapeArgs sh;
    c = app.add_subcommand("shape-vector", "Extract a template-shape attribute vector");
    c->add_option("--model", sh.model)->required();
    c->add_option("--dataset", sh.dataset)->required()->check(CLI::ExistingFile);
    c->add_option("--template", sh.tpl);
    c->add_option("--kind", sh.kind, "tensile_strain or cloud_diameter");
    c->add_option("--target-n", sh.target_n);
    c->add_option("--out", sh.out)->required();
    c->callback(run(run_shape_vector, sh));

    GenerateArgs ge;
    c = app.add_subcommand("generate", "Decode a seed with attribute-vector edits to MIDI");
    c->add_option("--model", ge.model)->required();
    c->add_option("--vectors", ge.vectors)->required()->check(CLI::ExistingFile);
    c->add_option("--seed-midi", ge.seed_midi)->check(CLI::ExistingFile);
    c->add_option("--fragment-index", ge.fragment_index);
    c->add_option("--edit", ge.edits, "NAME=ALPHA, repeatable, applied in order");
    c->add_option("--out", ge.out)->required();
    c->add_option("--report", ge.report, "Defaults to OUT.json");
    c->callback(run(run_generate, ge));

    ChainArgs ch;
    c = app.add_subcommand("compose-chain", "Multi-section variation from one seed");
    c->add_option("--model", ch.model)->required();
    c->add_option("--vectors", ch.vectors)->required()->check(CLI::ExistingFile);
    c->add_option("--plan", ch.plan)->required()->check(CLI::ExistingFile);
    c->add_option("--seed-midi", ch.seed_midi)->check(CLI::ExistingFile);
    c->add_option("--fragment-index", ch.fragment_index);
    c->add_option("--out", ch.out)->required();
    c->add_option("--report", ch.report, "Defaults to OUT.json");
    c->callback(run(run_compose_chain, ch));

    EvalArgs ev;
    c = app.add_subcommand("eval", "Scaled-vector experiments");
    c->add_option("--model", ev.model)->required();
    c->add_option("--vectors", ev.vectors)->required()->check(CLI::ExistingFile);
    c->add_option("--experiment", ev.experiment)->check(CLI::IsMember({"direction", "level", "interaction", "pitch-dist"}));
    c->add_option("--vector", ev.vector, "Vector to apply (A for interaction)");
    c->add_option("--vector-b", ev.vector_b, "Second vector for interaction");
    c->add_option("--n", ev.n);
    c->add_option("--scales", ev.scales)->delimiter(',');
    c->add_option("--scale", ev.scale, "Scale for pitch-dist");
    c->add_flag("--svg", ev.svg, "Also write an SVG chart");
    c->add_option("--out", ev.out)->required();
    c->callback(run(run_eval, ev));

    GradcheckArgs gc;
    c = app.add_subcommand("gradcheck", "Finite-difference check of the backward pass");
    c->add_option("--samples", gc.samples);
    c->add_option("--tolerance", gc.tolerance);
    c->callback(run(run_gradcheck, gc));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ttv::InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed JSON input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
    return code;
}
