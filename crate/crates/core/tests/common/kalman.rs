//! Fixed-interval (Rauch–Tung–Striebel) smoother for
//! `X_1 ~ N(0, p0)`, `X_m = a X_{m-1} + q^{1/2} v_m`, `Y_m = b X_m + r^{1/2} w_m`.
//!
//! Written against the textbook recursions only; shares no code with the
//! crate under test.

#[allow(dead_code)]
pub fn rts_smoother(a: f64, b: f64, q: f64, r: f64, p0: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut mp = vec![0.0; n]; // predicted mean
    let mut pp = vec![0.0; n]; // predicted variance
    let mut mf = vec![0.0; n]; // filtered mean
    let mut pf = vec![0.0; n]; // filtered variance
    for k in 0..n {
        if k == 0 {
            mp[0] = 0.0;
            pp[0] = p0;
        } else {
            mp[k] = a * mf[k - 1];
            pp[k] = a * a * pf[k - 1] + q;
        }
        let s = b * b * pp[k] + r;
        let gain = pp[k] * b / s;
        mf[k] = mp[k] + gain * (y[k] - b * mp[k]);
        pf[k] = (1.0 - gain * b) * pp[k];
    }
    let mut ms = mf.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        let c = pf[k] * a / pp[k + 1];
        ms[k] = mf[k] + c * (ms[k + 1] - mp[k + 1]);
    }
    ms
}
