#include "lindistill/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lindistill/errors.hpp"
#include "lindistill/rng.hpp"

namespace lindistill {

std::vector<std::size_t> probe_indices(std::size_t size, std::size_t count, std::uint64_t seed) {
    if (count > size) throw std::invalid_argument("more probe samples requested than the probe set holds");
    std::vector<std::size_t> all(size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng rng(seed, 0x9B0BE000);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(size - i));
        std::swap(all[i], all[j]);
    }
    all.resize(count);
    return all;
}

HiddenTrace probe_trace(const Model& model, const Dataset& probe, std::span<const std::size_t> indices) {
    NoGradGuard no_grad;
    return forward_with_trace(model, make_batch(probe, indices));
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine_distance: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 && nb == 0.0) return 0.0;
    if (na == 0.0 || nb == 0.0) return 1.0;
    const double cos = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    return 1.0 - cos;
}

namespace {

void check_comparable(const Model& a, const Model& b) {
    if (a.spec().depth() != b.spec().depth() || a.spec().width != b.spec().width) {
        throw ShapeError("hidden-state comparison needs models with equal depth and width");
    }
}

}  // namespace

double mean_cosine_distance(const Model& a, const Model& b, const Dataset& probe,
                            std::span<const std::size_t> indices) {
    check_comparable(a, b);
    if (indices.empty()) throw std::invalid_argument("no probe samples");
    const HiddenTrace ta = probe_trace(a, probe, indices);
    const HiddenTrace tb = probe_trace(b, probe, indices);
    const std::size_t width = a.spec().width;
    const std::size_t time = probe.seq_len;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t l = 0; l < ta.hidden.size(); ++l) {
        const auto va = ta.hidden[l].values();
        const auto vb = tb.hidden[l].values();
        for (std::size_t s = 0; s < indices.size(); ++s) {
            const auto len = static_cast<std::size_t>(probe.lengths[indices[s]]);
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t off = (s * time + t) * width;
                sum += cosine_distance(va.subspan(off, width), vb.subspan(off, width));
                ++count;
            }
        }
    }
    return sum / static_cast<double>(count);
}

ShiftCurve hidden_shift(const Model& source, const std::vector<StepModel>& checkpoints, const Dataset& probe,
                        std::size_t samples, std::uint64_t seed) {
    const auto idx = probe_indices(probe.count, samples, seed);
    ShiftCurve curve;
    for (const auto& [step, model] : checkpoints) {
        curve.points.emplace_back(step, mean_cosine_distance(source, model, probe, idx));
    }
    std::stable_sort(curve.points.begin(), curve.points.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    return curve;
}

Pca2 pca2(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    if (n < 2) throw std::invalid_argument("projection needs at least 2 checkpoints");
    {
        const Eigen::MatrixXd raw = x * x.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(raw, Eigen::EigenvaluesOnly);
        const Eigen::VectorXd ev = es.eigenvalues();
        const double top = ev(n - 1);
        const double tol = 1e-12 * std::max(top, 0.0) * static_cast<double>(n);
        const long rank = (ev.array() > tol).count();
        if (top <= 0.0 || rank < 2) {
            throw std::invalid_argument("degenerate hidden-state matrix: rank " + std::to_string(top <= 0.0 ? 0 : rank) +
                                        " < 2");
        }
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd xc = x.rowwise() - mean;
    const Eigen::MatrixXd gram = xc * xc.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double trace = std::max(gram.trace(), 0.0);

    Pca2 out;
    out.coords = Eigen::MatrixXd::Zero(n, 2);
    out.axes = Eigen::MatrixXd::Zero(x.cols(), 2);
    out.total_variance = trace / static_cast<double>(n - 1);
    for (int k = 0; k < 2; ++k) {
        const double lambda = std::max(ev(n - 1 - k), 0.0);
        Eigen::VectorXd u = es.eigenvectors().col(n - 1 - k);
        Eigen::VectorXd axis = xc.transpose() * u;
        const double norm = axis.norm();
        if (lambda > 1e-14 * std::max(trace, 1e-300) && norm > 0.0) {
            axis /= norm;
        } else {
            axis.setZero();
            u.setZero();
        }
        for (Eigen::Index j = 0; j < axis.size(); ++j) {
            if (std::abs(axis(j)) > 1e-12) {
                if (axis(j) < 0.0) {
                    axis = -axis;
                    u = -u;
                }
                break;
            }
        }
        out.axes.col(k) = axis;
        out.coords.col(k) = xc * axis;
        out.explained[static_cast<std::size_t>(k)] = trace > 0.0 ? lambda / trace : 0.0;
    }
    return out;
}

Eigen::RowVectorXd hidden_features(const Model& model, const Dataset& probe, std::span<const std::size_t> indices) {
    const HiddenTrace tr = probe_trace(model, probe, indices);
    const std::size_t width = model.spec().width;
    const std::size_t time = probe.seq_len;
    const std::size_t per_layer = indices.size() * time * width;
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(per_layer * tr.hidden.size()));
    for (std::size_t l = 0; l < tr.hidden.size(); ++l) {
        const auto v = tr.hidden[l].values();
        for (std::size_t s = 0; s < indices.size(); ++s) {
            const auto len = static_cast<std::size_t>(probe.lengths[indices[s]]);
            for (std::size_t i = 0; i < len * width; ++i) {
                const std::size_t off = (s * time) * width + i;
                row(static_cast<Eigen::Index>(l * per_layer + off)) = v[off];
            }
        }
    }
    return row;
}

TrajectoryProjection trajectory_projection(const std::vector<TrajectoryVariant>& variants, const Dataset& probe,
                                           std::span<const std::size_t> indices) {
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<std::pair<std::string, std::int64_t>> labels;
    const Model* first = nullptr;
    for (const auto& v : variants) {
        for (const auto& [step, model] : v.checkpoints) {
            if (first) check_comparable(*first, model);
            first = first ? first : &model;
            rows.push_back(hidden_features(model, probe, indices));
            labels.emplace_back(v.name, step);
        }
    }
    if (rows.size() < 2) throw std::invalid_argument("projection needs at least 2 checkpoints");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i];
    const Pca2 pca = pca2(x);
    TrajectoryProjection out;
    out.explained = pca.explained;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out.points.push_back({labels[i].first, labels[i].second, pca.coords(r, 0), pca.coords(r, 1)});
    }
    return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 paired values");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw std::invalid_argument("loglog_slope: x values are all equal");
    return sxy / sxx;
}

TimingReport timing_bench(const std::vector<std::pair<std::string, TimedFn>>& kinds,
                          const std::vector<std::size_t>& lengths, std::size_t runs, std::size_t warmup) {
    if (runs < 3) throw std::invalid_argument("timing needs at least 3 runs");
    if (lengths.size() < 4) throw std::invalid_argument("timing needs at least 4 lengths");
    using clock = std::chrono::steady_clock;
    TimingReport report;
    report.runs = runs;
    for (const auto& [kind, fn] : kinds) {
        std::vector<double> xs, ys;
        for (std::size_t n : lengths) {
            for (std::size_t w = 0; w < warmup; ++w) fn(n);
            std::vector<double> times;
            for (std::size_t r = 0; r < runs; ++r) {
                const auto t0 = clock::now();
                fn(n);
                times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
            }
            const double mean = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(runs);
            double var = 0.0;
            for (double t : times) var += (t - mean) * (t - mean);
            const double sd = std::sqrt(var / static_cast<double>(runs - 1));
            report.points.push_back({kind, n, mean, sd});
            xs.push_back(static_cast<double>(n));
            ys.push_back(std::max(mean, 1e-12));
        }
        report.slopes[kind] = loglog_slope(xs, ys);
    }
    return report;
}

TimingReport timing_bench(const std::vector<std::pair<std::string, Model>>& models,
                          const std::vector<std::size_t>& lengths, std::size_t runs, std::size_t batch,
                          std::uint64_t seed) {
    std::vector<std::pair<std::string, TimedFn>> kinds;
    for (const auto& [kind, model] : models) {
        for (std::size_t n : lengths) {
            if (n > model.spec().max_len) {
                throw std::invalid_argument("model '" + kind + "' supports at most " +
                                            std::to_string(model.spec().max_len) + " positions");
            }
        }
        const Model* m = &model;
        kinds.emplace_back(kind, [m, batch, seed](std::size_t n) {
            Batch b;
            b.size = batch;
            b.time = n;
            Rng rng(seed, n);
            for (std::size_t i = 0; i < batch * n; ++i) {
                b.tokens.push_back(static_cast<std::int32_t>(rng.below(m->spec().vocab)));
            }
            b.lengths.assign(batch, static_cast<std::int32_t>(n));
            b.labels.assign(m->spec().head == HeadKind::lm ? batch * n : batch, 0);
            NoGradGuard no_grad;
            forward_with_trace(*m, b);
        });
    }
    return timing_bench(kinds, lengths, runs);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

std::string num(double v, int precision = 17) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

}  // namespace

void write_shift_csv(const std::filesystem::path& path, const std::map<std::string, ShiftCurve>& curves) {
    std::string text = "series,step,cosine_distance\n";
    for (const auto& [name, curve] : curves) {
        for (const auto& [step, d] : curve.points) text += name + "," + std::to_string(step) + "," + num(d) + "\n";
    }
    write_text(path, text);
}

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryProjection& projection) {
    std::string text = "variant,step,x,y\n";
    for (const auto& p : projection.points) {
        text += p.variant + "," + std::to_string(p.step) + "," + num(p.x) + "," + num(p.y) + "\n";
    }
    text += "# explained," + num(projection.explained[0]) + "," + num(projection.explained[1]) + "\n";
    write_text(path, text);
}

void write_timing_csv(const std::filesystem::path& path, const TimingReport& report) {
    std::string text = "kind,length,mean_seconds,std_seconds,runs\n";
    for (const auto& p : report.points) {
        text += p.kind + "," + std::to_string(p.length) + "," + num(p.mean_seconds) + "," + num(p.std_seconds) + "," +
                std::to_string(report.runs) + "\n";
    }
    for (const auto& [kind, slope] : report.slopes) text += "# slope," + kind + "," + num(slope) + "\n";
    write_text(path, text);
}

namespace {

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& opt) {
    const double w = 640, h = 420, left = 70, right = 150, top = 40, bottom = 55;
    auto tx = [&](double v) { return opt.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if ((opt.log_x && x <= 0) || (opt.log_y && y <= 0)) continue;
            x0 = std::min(x0, tx(x));
            x1 = std::max(x1, tx(x));
            y0 = std::min(y0, ty(y));
            y1 = std::max(y1, ty(y));
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pw = w - left - right, ph = h - top - bottom;
    auto px = [&](double x) { return left + (tx(x) - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + ph - (ty(y) - y0) / (y1 - y0) * ph; };
    auto tick = [](double v, bool log) { return num(log ? std::pow(10.0, v) : v, 4); };

    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(opt.title) << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
        const double gx = left + pw * i / 4.0, gy = top + ph - ph * i / 4.0;
        os << "<line x1=\"" << gx << "\" y1=\"" << top << "\" x2=\"" << gx << "\" y2=\"" << top + ph
           << "\" stroke=\"#ddd\"/>\n";
        os << "<line x1=\"" << left << "\" y1=\"" << gy << "\" x2=\"" << left + pw << "\" y2=\"" << gy
           << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << gx << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << tick(fx, opt.log_x)
           << "</text>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">" << tick(fy, opt.log_y)
           << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">" << escape(opt.x_label)
       << "</text>\n";
    os << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << escape(opt.y_label) << "</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        std::string pts;
        for (const auto& [x, y] : series[i].points) {
            if ((opt.log_x && x <= 0) || (opt.log_y && y <= 0)) continue;
            pts += num(px(x), 6) + "," + num(py(y), 6) + " ";
            os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        if (opt.lines && !pts.empty()) {
            os << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        }
        const double ly = top + 14 + 18.0 * static_cast<double>(i);
        os << "<rect x=\"" << left + pw + 12 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"12\" fill=\"" << color
           << "\"/>\n";
        os << "<text x=\"" << left + pw + 30 << "\" y=\"" << ly + 1 << "\">" << escape(series[i].name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace lindistill
