use redemption_market::*;
use redemption_market::experiments::{ExperimentConfig, sample_population, assign_informed, evaluate};
use redemption_market::metrics::freerider_bins;

fn pass(cfg: &ExperimentConfig, n: u64, mechs: &[Mechanism]) -> std::collections::BTreeMap<String, Vec<f64>> {
    let mut out: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for rep in 0..n {
        let mut users = sample_population(cfg, rep);
        assign_informed(&mut users, 1.0, cfg.seed, rep);
        let total: f64 = users.iter().map(|u| u.data).sum();
        let model = cfg.model_for(total).unwrap();
        for &mech in mechs {
            let (o, m) = evaluate(mech, &users, &model, cfg, rep, 0.0).unwrap();
            out.entry(format!("{mech}-welfare")).or_default().push(m.welfare);
            out.entry(format!("{mech}-jain")).or_default().push(m.jain);
            if mech == Mechanism::Iiq {
                out.entry("IIQ-fill".into()).or_default().push(m.fulfillment);
                let b = freerider_bins(&users, &o, 3).unwrap();
                for k in 0..3 { out.entry(format!("IIQ-bin{k}")).or_default().push(b[k]); }
            }
        }
    }
    out
}
fn mean(v: &[f64]) -> f64 { v.iter().sum::<f64>() / v.len() as f64 }

fn main() {
    let n = 2000u64;
    // Accuracy-aware defaults.
    let cfg = ExperimentConfig::default();
    let aa = pass(&cfg, n, &[Mechanism::Iiq, Mechanism::Ciq, Mechanism::Opp]);
    println!("aa: IIQ={:.1} CIQ={:.1} OPP={:.1} ratio_opp={:.5} ratio_ciq={:.5}",
        mean(&aa["IIQ-welfare"]), mean(&aa["CIQ-welfare"]), mean(&aa["OPP-welfare"]),
        mean(&aa["IIQ-welfare"])/mean(&aa["OPP-welfare"]), mean(&aa["IIQ-welfare"])/mean(&aa["CIQ-welfare"]));
    println!("aa jains: IIQ={:.4} CIQ={:.4} OPP={:.4}", mean(&aa["IIQ-jain"]), mean(&aa["CIQ-jain"]), mean(&aa["OPP-jain"]));
    println!("aa bins: {:.4} {:.4} {:.4}  fill={:.4}", mean(&aa["IIQ-bin0"]), mean(&aa["IIQ-bin1"]), mean(&aa["IIQ-bin2"]), mean(&aa["IIQ-fill"]));

    // Privacy-only.
    let mut po_cfg = cfg.clone();
    po_cfg.accuracy_sense = "0".parse().unwrap();
    let po = pass(&po_cfg, n, &[Mechanism::Iiq, Mechanism::Ciq, Mechanism::Opp]);
    println!("po: IIQ={:.1} CIQ={:.1} OPP={:.1} ratio_opp={:.5} jain IIQ={:.4} CIQ={:.4} OPP={:.4}",
        mean(&po["IIQ-welfare"]), mean(&po["CIQ-welfare"]), mean(&po["OPP-welfare"]),
        mean(&po["IIQ-welfare"])/mean(&po["OPP-welfare"]),
        mean(&po["IIQ-jain"]), mean(&po["CIQ-jain"]), mean(&po["OPP-jain"]));

    // rho monotonicity (IIQ, defaults).
    let mut last = f64::NEG_INFINITY; let mut mono_ok = true;
    for rho10 in [0, 2, 4, 6, 8, 10] {
        let rho = rho10 as f64 / 10.0;
        let mut w = 0.0;
        for rep in 0..n {
            let mut users = sample_population(&cfg, rep);
            assign_informed(&mut users, rho, cfg.seed, rep);
            let total: f64 = users.iter().map(|u| u.data).sum();
            let model = cfg.model_for(total).unwrap();
            w += evaluate(Mechanism::Iiq, &users, &model, &cfg, rep, 0.0).unwrap().1.welfare;
        }
        w /= n as f64;
        print!("rho={rho}: {w:.1}  ");
        if w < last { mono_ok = false; }
        last = w;
    }
    println!("\nmonotone: {mono_ok}");

    // Convergence I-grid fulfillment at N=500.
    for count in [5usize, 100] {
        let c = cfg.with_users(count);
        let mut fill = 0.0;
        let m = 500;
        for rep in 0..m as u64 {
            let mut users = sample_population(&c, rep);
            assign_informed(&mut users, 1.0, c.seed, rep);
            let total: f64 = users.iter().map(|u| u.data).sum();
            let model = c.model_for(total).unwrap();
            fill += evaluate(Mechanism::Iiq, &users, &model, &c, rep, 0.0).unwrap().1.fulfillment;
        }
        println!("I={count}: fill={:.4}", fill / m as f64);
    }
}
