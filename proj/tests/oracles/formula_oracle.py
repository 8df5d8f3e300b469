"""Independent high-precision evaluation of the closed-form rate formulas.

Values printed here are frozen into the C++ unit tests. Run with:
    python3 tests/oracles/formula_oracle.py
"""
from mpmath import mp, mpf, log, erf, sqrt, findroot

mp.dps = 40


def h(x):
    x = mpf(x)
    if x == 0 or x == 1:
        return mpf(0)
    return -x * log(x, 2) - (1 - x) * log(1 - x, 2)


def security_constant(eps_sec, eps_cor):
    return 6 * log(mpf(19) / eps_sec, 2) + log(mpf(2) / eps_cor, 2)


def jitter_qber(f, fwhm):
    sigma = fwhm / (2 * sqrt(2 * log(2)))
    p = erf((1 / (2 * f)) / (sigma * sqrt(2)))
    return (1 - p) / 2


def max_jitter(f, e_max):
    # solve in units of the slot width 1/f so the bracket is scale free
    u = findroot(lambda x: jitter_qber(f, x / f) - e_max, (mpf("0.1"), mpf("5")), solver="anderson")
    return u / f


def eq_c1(k, eta, n, nc, p_t, p_dc, p_opt):
    ct = p_t / (nc - 1) * (n - 1)
    q = k * eta * (1 + ct) + p_dc
    e = (k * eta * (p_opt + ct / 2) + p_dc / 2) / q
    return q, e


if __name__ == "__main__":
    print("h(0.0069)           =", mp.nstr(h(mpf("0.0069")), 15))
    print("lambda_ec(1e7,.0069,1.16) =", mp.nstr(mpf(10) ** 7 * mpf("1.16") * h(mpf("0.0069")), 15))
    print("security constant   =", mp.nstr(security_constant(mpf("1e-9"), mpf("1e-15")), 15))
    f10 = mpf(10) ** 10
    ps = mpf(10) ** -12
    print("E(10GHz, 80ps)      =", mp.nstr(jitter_qber(f10, 80 * ps), 15))
    t = max_jitter(f10, mpf("0.11"))
    print("T_max(10GHz, 0.11)  =", mp.nstr(t / ps, 15), "ps")
    t50 = max_jitter(mpf(50) * 10**6, mpf("0.11"))
    print("T_max(50MHz, 0.11)  =", mp.nstr(t50 / ps, 15), "ps")
    # Table 1, 20 km, 19.5 dB splitter, eta_r 38.8 %, n = Nc = 64
    eta = mpf(10) ** (-(mpf("0.2") * 20 + mpf("19.5")) / 10) * mpf("0.388")
    print("eta (20 km, 19.5 dB)=", mp.nstr(eta, 15), " loss dB =", mp.nstr(-10 * log(eta, 10), 15))
    args = dict(n=64, nc=64, p_t=mpf("0.0098"), p_dc=mpf("6e-8"), p_opt=mpf("0.01"))
    qm, em = eq_c1(mpf("0.52"), eta, **args)
    qn, en = eq_c1(mpf("0.13"), eta, **args)
    print("Q_mu, E_mu          =", mp.nstr(qm, 15), mp.nstr(em, 15))
    print("Q_nu, E_nu          =", mp.nstr(qn, 15), mp.nstr(en, 15))
    pm, pn = mpf("0.69"), mpf("0.31")
    ez = (pm * em * qm + pn * en * qn) / (pm * qm + pn * qn)
    print("e_z (E*Q weighted)  =", mp.nstr(ez, 15))
