use super::{axpy, scale, EmbeddedPair, OdeSystem, Tolerances, Trial};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Dormand-Prince 5(4) with FSAL and a fourth-order interpolant.
pub struct Dopri5<const N: usize> {
    k: [[f64; N]; 7],
    cont: [[f64; N]; 5],
}

impl<const N: usize> Dopri5<N> {
    pub fn new() -> Self {
        Self { k: [[0.0; N]; 7], cont: [[0.0; N]; 5] }
    }
}

impl<const N: usize> Default for Dopri5<N> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const N: usize> EmbeddedPair<N> for Dopri5<N> {
    const ERROR_ORDER: f64 = 4.0;
    const BETA: f64 = 0.04;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;

    fn trial<S: OdeSystem<N>>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64; N],
        f0: &[f64; N],
        h: f64,
        tol: &Tolerances,
    ) -> Trial<N> {
        macro_rules! stage {
            ($c:expr, $terms:expr) => {
                match sys.rhs(t + $c * h, &axpy(y, h, $terms)) {
                    Some(v) => v,
                    None => return Trial::Domain,
                }
            };
        }
        let k1 = *f0;
        let k2 = stage!(C2, &[(A21, &k1)]);
        let k3 = stage!(C3, &[(A31, &k1), (A32, &k2)]);
        let k4 = stage!(C4, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k5 = stage!(C5, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k6 = stage!(1.0, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let y_new = axpy(y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = match sys.rhs(t + h, &y_new) {
            Some(v) => v,
            None => return Trial::Domain,
        };

        let mut sum = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            sum += (e / scale(y, &y_new, tol, i)).powi(2);
        }
        self.k = [k1, k2, k3, k4, k5, k6, k7];
        Trial::Done { y_new, err: (sum / N as f64).sqrt() }
    }

    fn accept<S: OdeSystem<N>>(
        &mut self,
        _sys: &S,
        _t: f64,
        y: &[f64; N],
        y_new: &[f64; N],
        h: f64,
    ) -> Option<[f64; N]> {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        for i in 0..N {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            self.cont[0][i] = y[i];
            self.cont[1][i] = ydiff;
            self.cont[2][i] = bspl;
            self.cont[3][i] = ydiff - h * k7[i] - bspl;
            self.cont[4][i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        Some(*k7)
    }

    fn interpolate(&self, s: f64) -> [f64; N] {
        let s1 = 1.0 - s;
        let c = &self.cont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
        }
        out
    }

    fn evals_per_trial() -> usize {
        6
    }

    fn evals_per_accept() -> usize {
        0
    }
}
