#include "memgame/adjoint.hpp"

#include <cmath>
#include <memory>

#include "memgame/conditional.hpp"
#include "memgame/errors.hpp"

namespace memgame {

AdjointState path_state(const PathBundle& paths, const BsdeSolution& bsde,
                        std::size_t path, std::size_t step, std::size_t n_marks) {
    AdjointState st;
    st.t = paths.grid.time(step);
    st.x = paths.X(path, step);
    for (std::size_t i = 0; i < 2; ++i) {
        st.y[i] = paths.y(i, path, step);
        st.m[i] = paths.memory(i, path, step);
        st.u[i] = paths.control(i, path, step);
    }
    st.w = bsde.W(path, step);
    // Z and K live on steps 0..n-1; terminal evaluations hold the last slice
    const std::size_t zstep = step < paths.grid.n_steps ? step : paths.grid.n_steps - 1;
    st.z = bsde.Z.empty() ? 0.0 : bsde.Z(path, zstep);
    st.k.assign(n_marks, 0.0);
    for (std::size_t j = 0; j < bsde.K.size() && j < n_marks; ++j)
        st.k[j] = bsde.K[j](path, zstep);
    st.r.assign(n_marks, 0.0);
    return st;
}

double AdjointSolution::q2_mean(std::size_t step) const {
    if (q2.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t p = 0; p < q2.n_paths(); ++p) s += q2(p, step);
    return s / static_cast<double>(q2.n_paths());
}

PathMatrix solve_lambda_forward(const HamiltonianSpec& spec,
                                const AdjointTerminalSpec& terminal,
                                const PathBundle& paths, const BsdeSolution& bsde,
                                const NoiseBatch& noise, const ExecPolicy& policy) {
    const TimeGrid& grid = paths.grid;
    const std::size_t n = grid.n_steps;
    const std::size_t n_marks =
        spec.jump_spec.intensity > 0.0 ? spec.jump_spec.n_marks() : 0;
    const double lambda0 =
        terminal.psi_prime ? terminal.psi_prime(bsde.w0()) : 0.0;

    PathMatrix lambda(paths.n_paths, n + 1);
    static const std::vector<JumpEvent> no_events;

    parallel_for(policy, paths.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const auto& events = n_marks > 0 ? noise.jumps[p] : no_events;
            std::size_t ev = 0;
            lambda(p, 0) = lambda0;
            for (std::size_t s = 0; s < n; ++s) {
                AdjointState st = path_state(paths, bsde, p, s, n_marks);
                st.lambda = lambda(p, s);
                const double hw = hamiltonian_partial(spec, st, HArg::w);
                const double hz = hamiltonian_partial(spec, st, HArg::z);
                double d = hw * grid.dt + hz * noise.dB(p, s);
                if (n_marks > 0) {
                    while (ev < events.size() && events[ev].step == s) {
                        d += hamiltonian_partial_k(spec, st, events[ev].mark);
                        ++ev;
                    }
                    for (std::size_t j = 0; j < n_marks; ++j)
                        d -= hamiltonian_partial_k(spec, st, j) * spec.jump_spec.nu(j) *
                             grid.dt;
                }
                lambda(p, s + 1) = lambda(p, s) + d;
                if (!(std::abs(lambda(p, s + 1)) <= 1e12))
                    throw NumericalBlowup(p, s, lambda(p, s + 1));
            }
        }
    });
    return lambda;
}

namespace {

// dH/dLambda along the paths (terminal slice included), with multipliers
// (lambda, 0, 0, 0): valid as long as b, sigma, gamma carry no noisy-memory
// dependence.
PathMatrix memory_gradient(const HamiltonianSpec& spec, const PathBundle& paths,
                           const BsdeSolution& bsde, const PathMatrix& lambda,
                           std::size_t n_marks, const ExecPolicy& policy) {
    const std::size_t n = paths.grid.n_steps;
    PathMatrix dhdm(paths.n_paths, n + 1);
    parallel_for(policy, paths.n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p)
            for (std::size_t s = 0; s <= n; ++s) {
                AdjointState st = path_state(paths, bsde, p, s, n_marks);
                st.lambda = lambda(p, s);
                dhdm(p, s) = hamiltonian_partial(spec, st, HArg::m_own);
            }
    });
    return dhdm;
}

} // namespace

AdjointSolution solve_adjoint_triple(const HamiltonianSpec& spec,
                                     const AdjointTerminalSpec& terminal,
                                     const PathBundle& paths, const BsdeSolution& bsde,
                                     const PathMatrix& lambda, const NoiseBatch& noise,
                                     const RegressionBasis& basis,
                                     const ExecPolicy& policy,
                                     const RegressorSet& regressors) {
    const TimeGrid& grid = paths.grid;
    const std::size_t n = grid.n_steps;
    const std::size_t n_paths = paths.n_paths;
    const std::size_t d = grid.delay_steps.size() > static_cast<std::size_t>(spec.player)
                              ? grid.delay_steps[spec.player]
                              : 0;
    const std::size_t n_marks =
        spec.jump_spec.intensity > 0.0 ? spec.jump_spec.n_marks() : 0;

    AdjointSolution sol;
    sol.lambda = lambda;
    // terminal column stays zero: p2(T) = 0 by construction
    sol.p2 = PathMatrix(n_paths, n + 1);
    sol.q2 = PathMatrix(n_paths, n + 1);

    if (d > 0) {
        const PathMatrix dhdm =
            memory_gradient(spec, paths, bsde, lambda, n_marks, policy);

        // window(p, s) = sum_{r=s}^{min(s+d, n)-1} dH/dLambda(p, r): the
        // left-rule slices for p2, whose integrand is directly observable
        PathMatrix window(n_paths, n);
        parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) {
                double acc = 0.0;
                for (std::size_t s = n; s-- > 0;) {
                    acc += dhdm(p, s);
                    if (s + d <= n - 1) acc -= dhdm(p, s + d);
                    window(p, s) = acc;
                }
            }
        });

        std::vector<double> target(n_paths), fitted(n_paths), centred(n_paths);
        for (std::size_t s = 0; s < n; ++s) {
            PathStateConditional sr(paths, s, basis, regressors, policy);
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p) target[p] = window(p, s);
            });
            sr.fit(target.data(), fitted.data());
            // p2(t) = -int_t^{t+delta} E[dH/dLambda(s)|F_t] 1_[0,T](s) ds
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p)
                    sol.p2(p, s) = -fitted[p] * grid.dt;
            });
            // q2(t) = int_t^{t+delta} E[D_t(dH/dLambda(s))|F_t] 1_[0,T](s) ds.
            // The localised-duality estimator E[G dB_t|F_t]/dt reads 0 on the
            // window's own left-edge slice (F_t-measurable), so the integral
            // is taken with the right rule over (t, t+delta]: every slice is
            // then estimable and the tent law comes out exact.
            const std::size_t hi_r = std::min(s + d, n);
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p)
                    target[p] = window(p, s) - dhdm(p, s) + dhdm(p, hi_r);
            });
            sr.fit(target.data(), fitted.data());
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p)
                    centred[p] = (target[p] - fitted[p]) * noise.dB(p, s) / grid.dt;
            });
            sr.fit(centred.data(), fitted.data());
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p)
                    sol.q2(p, s) = fitted[p] * grid.dt;
            });
        }
    }

    // (p1, q1, r1) backward equation with driver
    //   mu1 = q2(t) + dH/dx(t) + dH/dy(t + delta) 1_{t + delta < T}
    DriverSpec driver;
    driver.driver = [&spec, &paths, &bsde, &lambda, &sol, d, n,
                     n_marks](const DriverArgs& a) {
        const std::size_t s = a.step;
        const std::size_t p = a.path;
        AdjointState st = path_state(paths, bsde, p, s, n_marks);
        st.lambda = lambda(p, s);
        st.p = a.w;
        st.q = a.z;
        for (std::size_t j = 0; j < a.n_marks && j < n_marks; ++j) st.r[j] = a.k[j];
        double mu = sol.q2.empty() ? 0.0 : sol.q2(p, s);
        mu += hamiltonian_partial(spec, st, HArg::x);
        if (s + d <= n - 1) {
            AdjointState adv = path_state(paths, bsde, p, s + d, n_marks);
            adv.lambda = lambda(p, s + d);
            adv.p = a.partial->W(p, s + d);
            adv.q = a.partial->Z(p, s + d);
            for (std::size_t j = 0; j < n_marks; ++j)
                adv.r[j] = a.partial->K[j](p, s + d);
            mu += hamiltonian_partial(spec, adv, HArg::y_own);
        }
        return mu;
    };
    driver.terminal_by_path = [&terminal, &lambda, n](std::size_t p, double xT) {
        double v = terminal.phi_prime ? terminal.phi_prime(xT) : 0.0;
        if (terminal.h_prime) v += terminal.h_prime(xT) * lambda(p, n);
        return v;
    };

    sol.pqr = solve_bsde_lsmc(driver, paths, noise, basis, policy, regressors);
    return sol;
}

ResidualReport verify_noisy_memory_residual(const HamiltonianSpec& spec,
                                         const AdjointSolution& adjoint,
                                         const PathBundle& paths,
                                         const BsdeSolution& bsde,
                                         const NoiseBatch& noise,
                                         const RegressionBasis& basis,
                                         const MalliavinOracle& oracle,
                                         const ExecPolicy& policy) {
    const TimeGrid& grid = paths.grid;
    const std::size_t n = grid.n_steps;
    const std::size_t n_paths = paths.n_paths;
    const std::size_t d = grid.delay_steps.size() > static_cast<std::size_t>(spec.player)
                              ? grid.delay_steps[spec.player]
                              : 0;
    const std::size_t n_marks =
        spec.jump_spec.intensity > 0.0 ? spec.jump_spec.n_marks() : 0;

    ResidualReport report;
    report.mean_residual_by_step.assign(n, 0.0);

    double malliavin_mismatch = 0.0;
    std::vector<double> hy_adv(n_paths), hy_fit(n_paths);
    for (std::size_t s = 0; s < n; ++s) {
        const bool advanced = s + d <= n - 1;
        if (advanced) {
            parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p) {
                    AdjointState adv = path_state(paths, bsde, p, s + d, n_marks);
                    adv.lambda = adjoint.lambda(p, s + d);
                    adv.p = adjoint.pqr.W(p, s + d);
                    adv.q = s + d < n ? adjoint.pqr.Z(p, s + d) : 0.0;
                    for (std::size_t j = 0; j < n_marks; ++j)
                        adv.r[j] = adjoint.pqr.K[j](p, s + d);
                    hy_adv[p] = hamiltonian_partial(spec, adv, HArg::y_own);
                }
            });
            PathStateConditional sr(paths, s, basis, RegressorSet{}, policy);
            sr.fit(hy_adv.data(), hy_fit.data());
        }

        const double step_sum = block_sum(policy, n_paths, [&](std::size_t p) {
            AdjointState st = path_state(paths, bsde, p, s, n_marks);
            st.lambda = adjoint.lambda(p, s);
            st.p = adjoint.pqr.W(p, s);
            st.q = adjoint.pqr.Z(p, s);
            for (std::size_t j = 0; j < n_marks; ++j) st.r[j] = adjoint.pqr.K[j](p, s);

            double malliavin_term = 0.0;
            if (d > 0) {
                if (oracle) {
                    const std::size_t hi_r = std::min(s + d, n);
                    for (std::size_t r = s; r < hi_r; ++r)
                        malliavin_term += oracle(p, s, r) * grid.dt;
                } else {
                    malliavin_term = adjoint.q2(p, s);
                }
            }
            double mu = hamiltonian_partial(spec, st, HArg::x) + malliavin_term;
            if (advanced) mu += hy_fit[p];

            double resid = adjoint.pqr.W(p, s + 1) - adjoint.pqr.W(p, s) +
                           mu * grid.dt - adjoint.pqr.Z(p, s) * noise.dB(p, s);
            for (std::size_t j = 0; j < n_marks; ++j) {
                std::size_t count = 0;
                for (const JumpEvent& ev : noise.jumps[p])
                    if (ev.step == s && ev.mark == j) ++count;
                resid -= adjoint.pqr.K[j](p, s) *
                         (static_cast<double>(count) - noise.jump_spec.nu(j) * grid.dt);
            }
            return resid;
        });
        report.mean_residual_by_step[s] =
            step_sum / static_cast<double>(n_paths) / grid.dt;

        if (d > 0 && oracle) {
            const double mm = block_sum(policy, n_paths, [&](std::size_t p) {
                double window = 0.0;
                const std::size_t hi_r = std::min(s + d, n);
                for (std::size_t r = s; r < hi_r; ++r)
                    window += oracle(p, s, r) * grid.dt;
                return adjoint.q2(p, s) - window;
            });
            malliavin_mismatch += mm / static_cast<double>(n_paths) * grid.dt;
        }
    }
    report.malliavin_mismatch_total = std::abs(malliavin_mismatch);

    double acc = 0.0, signed_acc = 0.0;
    for (double r : report.mean_residual_by_step) {
        acc += std::abs(r);
        signed_acc += r * grid.dt;
    }
    report.mean_abs_residual = acc / static_cast<double>(n);
    report.total_drift_mismatch = std::abs(signed_acc);

    // lambda via the calligraphic Hamiltonian q2 x + H: the extra term is
    // constant in (w, z, k), so the paths must coincide
    HamiltonianSpec cal = spec;
    const PathMatrix& q2 = adjoint.q2;
    // wrap the reward with + q2 x at the matching (path, step); partials in w
    // and z are taken at fixed (path, step) states below
    PathMatrix lambda2(n_paths, n + 1);
    parallel_for(policy, n_paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            lambda2(p, 0) = adjoint.lambda(p, 0);
            for (std::size_t s = 0; s < n; ++s) {
                AdjointState st = path_state(paths, bsde, p, s, n_marks);
                st.lambda = lambda2(p, s);
                const double q2xs = q2.empty() ? 0.0 : q2(p, s);
                auto cal_eval = [&](AdjointState& state) {
                    return q2xs * state.x + evaluate_hamiltonian(cal, state);
                };
                auto cal_partial = [&](AdjointState state, double AdjointState::*slot) {
                    const double keep = state.*slot;
                    const double h = 1e-5 * std::max(1.0, std::abs(keep));
                    state.*slot = keep + h;
                    const double up = cal_eval(state);
                    state.*slot = keep - h;
                    const double dn = cal_eval(state);
                    return (up - dn) / (2.0 * h);
                };
                double dstep = cal_partial(st, &AdjointState::w) * grid.dt +
                               cal_partial(st, &AdjointState::z) * noise.dB(p, s);
                if (n_marks > 0) {
                    for (const JumpEvent& ev : noise.jumps[p])
                        if (ev.step == s)
                            dstep += hamiltonian_partial_k(cal, st, ev.mark);
                    for (std::size_t j = 0; j < n_marks; ++j)
                        dstep -= hamiltonian_partial_k(cal, st, j) *
                                 spec.jump_spec.nu(j) * grid.dt;
                }
                lambda2(p, s + 1) = lambda2(p, s) + dstep;
            }
        }
    });
    double max_diff = block_reduce<double>(
        policy, n_paths,
        [&](double& acc_d, std::size_t lo, std::size_t hi) {
            double m = 0.0;
            for (std::size_t p = lo; p < hi; ++p)
                for (std::size_t s = 0; s <= n; ++s)
                    m = std::max(m, std::abs(lambda2(p, s) - adjoint.lambda(p, s)));
            acc_d = m;
        },
        [](double& t, const double& p) { t = std::max(t, p); });
    report.lambda_structural_max_diff = max_diff;
    return report;
}

namespace {

double golden_max(const std::function<double(double)>& fn, double lo, double hi) {
    const double phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - phi * (b - a);
    double x2 = a + phi * (b - a);
    double f1 = fn(x1), f2 = fn(x2);
    for (int it = 0; it < 90 && (b - a) > 1e-12 * (std::abs(a) + std::abs(b) + 1.0);
         ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = fn(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = fn(x1);
        }
    }
    return std::max(f1, f2);
}

} // namespace

ConcavityReport check_concavity_hat_hamiltonian(
    const HamiltonianSpec& spec, const PathBundle& paths, const BsdeSolution& bsde,
    const AdjointSolution& adjoint, double control_lo, double control_hi,
    std::size_t n_samples, uint64_t seed, const ExecPolicy& policy) {
    const std::size_t n = paths.grid.n_steps;
    const std::size_t n_marks =
        spec.jump_spec.intensity > 0.0 ? spec.jump_spec.n_marks() : 0;
    const int player = spec.player;

    struct Acc {
        std::size_t violations = 0;
        double worst = 0.0;
    };
    Acc acc = block_reduce<Acc>(
        policy, n_samples,
        [&](Acc& a, std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const std::size_t p =
                    rng::counter_hash(seed, i, 0, 11) % paths.n_paths;
                const std::size_t s = rng::counter_hash(seed, i, 0, 12) % n;

                AdjointState base = path_state(paths, bsde, p, s, n_marks);
                base.lambda = adjoint.lambda(p, s);
                base.p = adjoint.pqr.W(p, s);
                base.q = adjoint.pqr.Z(p, s);
                for (std::size_t j = 0; j < n_marks; ++j)
                    base.r[j] = adjoint.pqr.K[j](p, s);

                auto unif = [&](uint64_t stream) {
                    return 2.0 * rng::uniform(seed, i, 1, stream) - 1.0;
                };
                auto displace = [&](const AdjointState& st, int sign) {
                    AdjointState out = st;
                    // multiplicative in the ln-guarded coordinates
                    out.x = st.x * std::exp(0.4 * sign * unif(20));
                    out.y[player] = st.y[player] * std::exp(0.4 * sign * unif(21));
                    out.m[player] = st.m[player] + 0.4 * sign * unif(22);
                    out.w = st.w + 0.4 * sign * unif(23);
                    out.z = st.z + 0.4 * sign * unif(24);
                    for (std::size_t j = 0; j < out.k.size(); ++j)
                        out.k[j] = st.k[j] + 0.4 * sign * unif(25 + j);
                    return out;
                };
                AdjointState sa = displace(base, +1);
                AdjointState sb = displace(base, -1);
                AdjointState mid = base;
                mid.x = 0.5 * (sa.x + sb.x);
                mid.y[player] = 0.5 * (sa.y[player] + sb.y[player]);
                mid.m[player] = 0.5 * (sa.m[player] + sb.m[player]);
                mid.w = 0.5 * (sa.w + sb.w);
                mid.z = 0.5 * (sa.z + sb.z);
                for (std::size_t j = 0; j < mid.k.size(); ++j)
                    mid.k[j] = 0.5 * (sa.k[j] + sb.k[j]);

                auto hat = [&](AdjointState st) {
                    return golden_max(
                        [&](double v) {
                            st.u[player] = v;
                            return evaluate_hamiltonian(spec, st);
                        },
                        control_lo, control_hi);
                };
                try {
                    const double ha = hat(sa);
                    const double hb = hat(sb);
                    const double hm = hat(mid);
                    const double gap = hm - 0.5 * (ha + hb);
                    const double tol = 1e-8 * std::max(1.0, std::abs(hm));
                    if (gap < -tol) {
                        ++a.violations;
                        a.worst = std::min(a.worst, gap);
                    }
                } catch (const DomainError&) {
                    // sampled point left the model's domain; not a violation
                }
            }
        },
        [](Acc& t, const Acc& p) {
            t.violations += p.violations;
            t.worst = std::min(t.worst, p.worst);
        });

    ConcavityReport rep;
    rep.n_samples = n_samples;
    rep.n_violations = acc.violations;
    rep.worst_gap = acc.worst;

    struct Min {
        double v = 1e300;
    };
    Min lam_min = block_reduce<Min>(
        policy, paths.n_paths,
        [&](Min& m, std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p)
                m.v = std::min(m.v, adjoint.lambda(p, n));
        },
        [](Min& t, const Min& p) { t.v = std::min(t.v, p.v); });
    rep.lambda_terminal_min = lam_min.v;
    rep.lambda_terminal_nonneg = lam_min.v >= -1e-12;
    return rep;
}

} // namespace memgame
