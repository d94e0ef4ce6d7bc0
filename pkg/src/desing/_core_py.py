"""Pure-Python versions of the kernels in ``_core.pyx``."""
import numpy as np


def floyd_warshall(d):
    out = np.array(d, dtype=np.float64, copy=True)
    for k in range(out.shape[0]):
        np.minimum(out, out[:, k, None] + out[None, k, :], out=out)
    return out


def correspondence_distortion(da, db, ra, rb):
    if len(ra) < 2:
        return 0.0
    ra = np.asarray(ra)
    rb = np.asarray(rb)
    return float(np.max(np.abs(da[np.ix_(ra, ra)] - db[np.ix_(rb, rb)])))


def pair_distortion(da, db, ra, rb, a, b):
    if len(ra) == 0:
        return 0.0
    return float(np.max(np.abs(da[a, np.asarray(ra)] - db[b, np.asarray(rb)])))


def correspondence_feasible(da, db, delta):
    na, nb = da.shape[0], db.shape[0]
    if na * nb > 64:
        raise ValueError("feasibility search limited to |A|*|B| <= 64")
    npairs = na * nb
    compat = []
    for p in range(npairs):
        a1, b1 = divmod(p, nb)
        mask = 0
        for q in range(npairs):
            a2, b2 = divmod(q, nb)
            if abs(da[a1, a2] - db[b1, b2]) <= delta:
                mask |= 1 << q
        compat.append(mask)
    rowmask = [sum(1 << (a * nb + b) for b in range(nb)) for a in range(na)]
    colmask = [sum(1 << (a * nb + b) for a in range(na)) for b in range(nb)]
    full_b = (1 << nb) - 1

    def search(a, allowed, covered):
        for aa in range(a, na):
            if not allowed & rowmask[aa]:
                return False
        for bb in range(nb):
            if not (covered >> bb) & 1 and not allowed & colmask[bb]:
                return False
        if a < na:
            for b in range(nb):
                p = a * nb + b
                if allowed >> p & 1 and search(a + 1, allowed & compat[p], covered | 1 << b):
                    return True
            return False
        if covered == full_b:
            return True
        bb = next(b for b in range(nb) if not (covered >> b) & 1)
        for aa in range(na):
            p = aa * nb + bb
            if allowed >> p & 1 and search(na, allowed & compat[p], covered | 1 << bb):
                return True
        return False

    return search(0, (1 << npairs) - 1, 0)
