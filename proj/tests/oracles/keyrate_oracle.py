"""High-precision evaluation of the finite-key rate on fixed integer tallies.

Tallies are expected counts of the gain/QBER model, rounded to integers, so
the C++ code and this script see identical inputs. Values printed here are
frozen into tests/unit/test_keyrate.cpp. Run with:
    python3 tests/oracles/keyrate_oracle.py
"""
from mpmath import mp, mpf, exp, log, sqrt, nint

mp.dps = 40

MU, NU = mpf("0.52"), mpf("0.13")
P = {MU: mpf("0.69"), NU: mpf("0.31")}
PZ = mpf("0.9")
EPS_SEC, EPS_COR, FE = mpf("1e-9"), mpf("1e-15"), mpf("1.16")


def h(x):
    if x <= 0 or x >= 1:
        return mpf(0)
    return -x * log(x, 2) - (1 - x) * log(1 - x, 2)


def model_tally(eta, p_opt, n_z, p_dc=mpf("6e-8")):
    q = {k: k * eta + p_dc for k in (MU, NU)}
    e = {k: (k * eta * p_opt + p_dc / 2) / q[k] for k in (MU, NU)}
    n = n_z / (PZ * PZ * sum(P[k] * q[k] for k in (MU, NU)))
    rows = {}
    for basis, pb in (("Z", PZ), ("X", 1 - PZ)):
        for k in (MU, NU):
            sent = nint(n * P[k] * pb)
            det = nint(n * P[k] * pb * pb * q[k])
            err = nint(n * P[k] * pb * pb * q[k] * e[k])
            rows[(basis, k)] = (int(sent), int(det), int(err))
    return rows


def rate(rows, f=mpf(50) * 10**6, duty=mpf("0.5"), asym=False):
    lnf = log(19 / EPS_SEC)
    dev = (lambda n: mpf(0)) if asym else (lambda n: sqrt(n / 2 * lnf))
    tau0 = sum(P[k] * exp(-k) for k in (MU, NU))
    tau1 = sum(P[k] * exp(-k) * k for k in (MU, NU))

    def bounds(basis):
        n = {k: mpf(rows[(basis, k)][1]) for k in (MU, NU)}
        m = {k: mpf(rows[(basis, k)][2]) for k in (MU, NU)}
        dn, dm = dev(sum(n.values())), dev(sum(m.values()))
        np_ = {k: exp(k) / P[k] * (n[k] + dn) for k in n}
        nm = {k: exp(k) / P[k] * (n[k] - dn) for k in n}
        mp_ = {k: exp(k) / P[k] * (m[k] + dm) for k in m}
        mm = {k: exp(k) / P[k] * (m[k] - dm) for k in m}
        s0l = max(mpf(0), tau0 * (MU * nm[NU] - NU * np_[MU]) / (MU - NU))
        s0u = 2 * tau0 * mp_[NU]
        s1l = tau1 * MU / (NU * (MU - NU)) * (nm[NU] - NU**2 / MU**2 * np_[MU] - (MU**2 - NU**2) / MU**2 * s0u / tau0)
        return s0l, s0u, s1l, mp_, mm

    s0l, s0u, s1l, _, _ = bounds("Z")
    _, _, sx1l, mpx, mmx = bounds("X")
    v1u = tau1 * (mpx[MU] - mmx[NU]) / (MU - NU)
    b = v1u / sx1l
    c, d = s1l, sx1l
    gam = mpf(0) if asym or b == 0 else sqrt((c + d) * (1 - b) * b / (c * d * log(2)) * log((c + d) / (c * d * (1 - b) * b) * 19**2 / EPS_SEC**2, 2))
    phi = min(mpf("0.5"), b + gam)
    nz = sum(rows[("Z", k)][1] for k in (MU, NU))
    mz = sum(rows[("Z", k)][2] for k in (MU, NU))
    ez = mpf(mz) / nz
    lec = nz * FE * h(ez)
    ell = s0l + s1l * (1 - h(phi)) - lec - 6 * log(19 / EPS_SEC, 2) - log(2 / EPS_COR, 2)
    n = sum(v[0] for v in rows.values())
    return dict(s0l=s0l, s0u=s0u, s1l=s1l, sx1l=sx1l, v1u=v1u, phi=phi, lec=lec, ell=ell,
                R=max(mpf(0), ell) * duty * f / n, N=n)


def show(name, rows, **kw):
    print(name)
    for (basis, k), v in rows.items():
        print("  ", basis, "signal" if k == MU else "decoy", v)
    for key, val in rate(rows, **kw).items():
        print("  ", key, "=", mp.nstr(val, 15))


if __name__ == "__main__":
    eta1 = mpf(10) ** (-mpf("12.164") / 10) * mpf("0.388")
    show("user 1, n_z = 1e7", model_tally(eta1, mpf("0.0069"), mpf(10) ** 7))
    eta2 = mpf(10) ** (-mpf("12.131") / 10) * mpf("0.388")
    show("user 2, n_z = 1e6", model_tally(eta2, mpf("0.0091"), mpf(10) ** 6))
    # noiseless asymptote: single-photon yield eta, no dark counts
    eta = mpf("0.01")
    rows = model_tally(eta, mpf(0), mpf(10) ** 9, p_dc=mpf(0))
    r = rate(rows, asym=True)
    nzsent = sum(rows[("Z", k)][0] for k in (MU, NU))
    tau1 = sum(P[k] * exp(-k) * k for k in (MU, NU))
    print("asymptote s1l / N_Z =", mp.nstr(r["s1l"] / nzsent, 15), " tau1*eta =", mp.nstr(tau1 * eta, 15))
    rf = rate(rows)
    print("finite 1e9 s1l / N_Z =", mp.nstr(rf["s1l"] / nzsent, 15))
