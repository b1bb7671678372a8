#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "shir/errors.hpp"
#include "shir/sim.hpp"

namespace shir {

std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::ipd: return "IPD";
        case Method::shir: return "SHIR";
        case Method::debias: return "Debias_LB";
        case Method::sma: return "SMA";
    }
    return "?";
}

std::optional<Method> parse_method(std::string_view s) noexcept {
    if (s == "ipd" || s == "IPD") return Method::ipd;
    if (s == "shir" || s == "SHIR") return Method::shir;
    if (s == "debias" || s == "Debias_LB" || s == "debias_lb") return Method::debias;
    if (s == "sma" || s == "SMA") return Method::sma;
    return std::nullopt;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
using Clock = std::chrono::steady_clock;

struct RepOutcome {
    std::vector<ReplicationRow> rows;
    double shir_max_kkt = 0.0;
    std::size_t shir_violations = 0;
};

Matrix run_method(Method method, std::span<const StudyData> sites, const std::vector<LocalFit>& fits,
                  const std::vector<LocalSummary>& sums, const BenchmarkOptions& opts, RepOutcome& out) {
    const LossFamily fam = LossFamily::logistic;
    switch (method) {
        case Method::ipd: {
            const auto lg = default_lambda_g_grid(sites.size());
            const auto grid = default_ipd_lambda_grid(sites, fam, lg);
            return fit_ipd_gic(sites, fam, grid, lg, opts.schedule).bundle.beta;
        }
        case Method::shir: {
            const auto lg = default_lambda_g_grid(sums.size());
            const auto grid = default_lambda_grid(sums, lg);
            const GicResult res = select_by_gic(sums, grid, lg, opts.schedule);
            for (const auto& pt : res.table) {
                if (!pt.ok) continue;
                out.shir_max_kkt = std::max(out.shir_max_kkt, pt.kkt);
                if (pt.kkt > opts.kkt_limit) ++out.shir_violations;
            }
            return res.bundle.beta;
        }
        case Method::debias: {
            std::vector<DebiasInput> inputs;
            for (std::size_t m = 0; m < sites.size(); ++m)
                inputs.push_back(prepare_debias(sites[m], fam, fits[m]));
            return tune_debias_lnb(inputs, opts.schedule).bundle.beta;
        }
        case Method::sma: {
            std::size_t n = sites.front().n();
            for (const auto& s : sites) n = std::min(n, s.n());
            return tune_sma(sites, fam, sma_screen_dim(n), opts.schedule).bundle.beta;
        }
    }
    throw ContractViolation("unknown method");
}

RepOutcome run_replication(const SimSetting& s, std::size_t rep, const std::vector<Method>& methods,
                           const BenchmarkOptions& opts) {
    const std::uint64_t seed = derive_seed(s.seed, rep + 1);
    std::vector<StudyData> sites;
    std::vector<Vector> etas;
    std::vector<std::optional<Vector>> truth;
    for (std::size_t m = 1; m <= s.M; ++m) {
        SimStudy st = gen_study(s, m, derive_seed(seed, m));
        sites.push_back(std::move(st.data));
        etas.push_back(std::move(st.eta));
        truth.push_back(true_beta(s, m));
    }
    const bool sparse_truth = truth.front().has_value();

    RepOutcome out;
    std::vector<LocalFit> fits;
    std::vector<LocalSummary> sums;
    std::string local_error;
    const bool need_local = std::any_of(methods.begin(), methods.end(),
                                        [](Method m) { return m == Method::shir || m == Method::debias; });
    if (need_local) {
        try {
            for (std::size_t m = 0; m < sites.size(); ++m) {
                fits.push_back(fit_site(sites[m], LossFamily::logistic, opts.folds, derive_seed(seed, 1000 + m)));
                sums.push_back(summarize(sites[m], fits.back(), LossFamily::logistic));
            }
        } catch (const std::exception& e) {
            local_error = std::string("local fit: ") + e.what();
        }
    }

    for (Method method : methods) {
        ReplicationRow row;
        row.rep = rep;
        row.method = method;
        const auto t0 = Clock::now();
        try {
            if (!local_error.empty() && (method == Method::shir || method == Method::debias))
                throw Error(local_error);
            const Matrix B = run_method(method, sites, fits, sums, opts, out);
            double aee = 0.0, pe2 = 0.0, tp = 0.0, fp = 0.0, pos = 0.0;
            for (std::size_t m = 0; m < sites.size(); ++m) {
                const Vector b = B.row(static_cast<Eigen::Index>(m)).transpose();
                pe2 += (sites[m].X() * b - etas[m]).squaredNorm();
                if (!sparse_truth) continue;
                const Vector& t = *truth[m];
                aee += (b - t).cwiseAbs().sum();
                for (Eigen::Index j = 1; j < b.size(); ++j) {
                    const bool est = b[j] != 0.0, real = t[j] != 0.0;
                    pos += real;
                    tp += est && real;
                    fp += est && !real;
                }
            }
            row.ok = true;
            row.pe = std::sqrt(pe2);
            row.aee = sparse_truth ? aee : kNaN;
            row.tpr = sparse_truth && pos > 0 ? tp / pos : kNaN;
            row.fdr = sparse_truth ? (tp + fp > 0 ? fp / (tp + fp) : 0.0) : kNaN;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
            row.aee = row.pe = row.tpr = row.fdr = kNaN;
        }
        row.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        out.rows.push_back(std::move(row));
    }

    const ReplicationRow* ipd = nullptr;
    for (const auto& r : out.rows)
        if (r.method == Method::ipd) ipd = &r;
    for (auto& r : out.rows) {
        const bool base = ipd && ipd->ok && r.ok;
        r.raee = base && sparse_truth ? r.aee / ipd->aee : kNaN;
        r.rpe = base ? r.pe / ipd->pe : kNaN;
        if (&r == ipd && r.ok) {
            r.raee = sparse_truth ? 1.0 : kNaN;
            r.rpe = 1.0;
        }
    }
    return out;
}

void mean_se(const std::vector<double>& v, double& mean, double& se) {
    std::vector<double> x;
    for (double d : v)
        if (std::isfinite(d)) x.push_back(d);
    if (x.empty()) {
        mean = se = kNaN;
        return;
    }
    double s = 0.0;
    for (double d : x) s += d;
    mean = s / static_cast<double>(x.size());
    if (x.size() < 2) {
        se = kNaN;
        return;
    }
    double ss = 0.0;
    for (double d : x) ss += (d - mean) * (d - mean);
    se = std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
}

}  // namespace

BenchmarkResult run_benchmark(const SimSetting& s, const BenchmarkOptions& opts) {
    if (s.M < 1 || s.replications < 1) throw ContractViolation("need at least one site and one replication");
    std::vector<Method> methods{Method::ipd};
    for (Method m : opts.methods)
        if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);

    const auto t0 = Clock::now();
    std::vector<RepOutcome> outcomes(s.replications);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t rep; (rep = next++) < s.replications;) {
            outcomes[rep] = run_replication(s, rep, methods, opts);
            if (opts.verbose) {
                std::lock_guard lock(log_mutex);
                std::cerr << "replication " << rep + 1 << "/" << s.replications;
                for (const auto& r : outcomes[rep].rows)
                    std::cerr << "  " << to_string(r.method) << (r.ok ? "" : " FAILED") << " rpe=" << r.rpe
                              << " (" << std::fixed << std::setprecision(1) << r.seconds << "s)"
                              << std::defaultfloat << std::setprecision(6);
                std::cerr << "\n";
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(s.replications)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BenchmarkResult res;
    res.setting = s;
    for (auto& o : outcomes) {
        res.shir_max_kkt = std::max(res.shir_max_kkt, o.shir_max_kkt);
        res.shir_kkt_violations += o.shir_violations;
        for (auto& r : o.rows) res.rows.push_back(std::move(r));
    }
    for (Method m : methods) {
        MetricReport rep;
        rep.method = m;
        std::vector<double> aee, pe, raee, rpe, tpr, fdr;
        for (const auto& r : res.rows) {
            if (r.method != m) continue;
            if (!r.ok) {
                ++rep.failures;
                continue;
            }
            ++rep.count;
            aee.push_back(r.aee);
            pe.push_back(r.pe);
            raee.push_back(r.raee);
            rpe.push_back(r.rpe);
            tpr.push_back(r.tpr);
            fdr.push_back(r.fdr);
        }
        mean_se(aee, rep.aee, rep.aee_se);
        mean_se(pe, rep.pe, rep.pe_se);
        mean_se(raee, rep.raee, rep.raee_se);
        mean_se(rpe, rep.rpe, rep.rpe_se);
        mean_se(tpr, rep.tpr, rep.tpr_se);
        mean_se(fdr, rep.fdr, rep.fdr_se);
        res.reports.push_back(rep);
    }
    res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return res;
}

namespace {

std::string num(double v) {
    if (!std::isfinite(v)) return "NA";
    std::ostringstream o;
    o << std::setprecision(10) << v;
    return o.str();
}

}  // namespace

void write_benchmark(const BenchmarkResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "replications.csv");
        if (!out) throw DataError("cannot write to '" + dir.string() + "'");
        out << "mechanism,rep,method,ok,metric,value\n";
        for (const auto& row : r.rows) {
            const std::pair<const char*, double> metrics[] = {
                {"aee", row.aee}, {"pe", row.pe},   {"raee", row.raee},
                {"rpe", row.rpe}, {"tpr", row.tpr}, {"fdr", row.fdr}};
            for (const auto& [name, v] : metrics)
                out << to_string(r.setting.mechanism) << "," << row.rep << "," << to_string(row.method) << ","
                    << (row.ok ? 1 : 0) << "," << name << "," << num(v) << "\n";
        }
    }
    {
        std::ofstream out(dir / "summary.csv");
        out << "method,count,failures,raee,raee_se,rpe,rpe_se,aee,aee_se,pe,pe_se,tpr,tpr_se,fdr,fdr_se\n";
        for (const auto& m : r.reports)
            out << to_string(m.method) << "," << m.count << "," << m.failures << "," << num(m.raee) << ","
                << num(m.raee_se) << "," << num(m.rpe) << "," << num(m.rpe_se) << "," << num(m.aee) << ","
                << num(m.aee_se) << "," << num(m.pe) << "," << num(m.pe_se) << "," << num(m.tpr) << ","
                << num(m.tpr_se) << "," << num(m.fdr) << "," << num(m.fdr_se) << "\n";
    }
    {
        std::ofstream out(dir / "setting.txt");
        const auto& s = r.setting;
        out << "mechanism=" << to_string(s.mechanism) << "\nM=" << s.M << "\np=" << s.p << "\nn=" << s.n
            << "\nreplications=" << s.replications << "\nseed=" << s.seed << "\nsignal_scale=" << num(s.signal_scale)
            << "\nshir_max_kkt=" << num(r.shir_max_kkt) << "\nshir_kkt_violations=" << r.shir_kkt_violations
            << "\n";
        for (const auto& row : r.rows)
            if (!row.ok)
                out << "failure=" << row.rep << "," << to_string(row.method) << "," << row.error << "\n";
    }
}

}  // namespace shir
