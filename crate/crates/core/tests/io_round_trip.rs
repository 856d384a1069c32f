//! Session logs and reports reproduce in-memory results exactly.

use proptest::prelude::*;
use sharing_effects::io::report::RowStatus;
use sharing_effects::io::session_log::data_section;
use sharing_effects::io::{read_session_log, write_session_log, AteReport, ConfigFile, RunManifest};
use sharing_effects::{
    estimate_gamma, pairwise_ates, sample_dataset, AssignmentPolicy, EstimatorKind,
    MisspecificationKnob, ProductionPolicy, SharingMdpConfig, SimulationSeed, VariantId,
};

fn log_text(dataset: &sharing_effects::Dataset, manifest: Option<&RunManifest>) -> String {
    let mut buf = Vec::new();
    write_session_log(&mut buf, dataset, manifest).unwrap();
    String::from_utf8(buf).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn session_logs_round_trip(
        gammas in prop::collection::vec(0.0f64..0.8, 2..5),
        seed in any::<u64>(),
        n in 1usize..200,
    ) {
        let k = gammas.len();
        let config = SharingMdpConfig::new(ProductionPolicy::uniform(k).unwrap(), gammas, 1_000_000).unwrap();
        let d = sample_dataset(&config, AssignmentPolicy::Production, MisspecificationKnob::none(), SimulationSeed::new(seed), n).unwrap();
        let manifest = RunManifest::new(vec!["simulate".into()], "now".into());
        let text = log_text(&d, Some(&manifest));
        let back = read_session_log(text.as_bytes(), d.policy().clone()).unwrap();
        prop_assert_eq!(&back, &d);
        let plain = log_text(&back, None);
        prop_assert_eq!(data_section(&plain), data_section(&text));
    }
}

#[test]
fn report_values_equal_in_memory_estimates() {
    let file = ConfigFile::reference();
    let config = file.mdp_config().unwrap();
    let d = sample_dataset(&config, AssignmentPolicy::Production, MisspecificationKnob::none(), SimulationSeed::new(31), 100_000).unwrap();
    let back = read_session_log(log_text(&d, None).as_bytes(), file.policy().unwrap()).unwrap();
    let names = file.variant_names();
    let report = AteReport::compute(&back, &EstimatorKind::ALL, &names).unwrap();
    let rows = AteReport::parse(&report.render(None)).unwrap();
    assert_eq!(rows, report.rows);

    let gamma = estimate_gamma(&d).unwrap();
    for row in rows.iter().filter(|r| r.record == "gamma") {
        let a = names.iter().position(|n| *n == row.variant_i).unwrap();
        assert_eq!(row.value, Some(gamma.gammas[a]));
    }
    let mut checked = 0;
    for kind in EstimatorKind::ALL {
        let m = pairwise_ates(&d, kind).unwrap();
        for row in rows.iter().filter(|r| r.record == "ate" && r.estimator == Some(kind)) {
            let i = names.iter().position(|n| *n == row.variant_i).unwrap();
            let j = names.iter().position(|n| Some(n) == row.variant_j.as_ref()).unwrap();
            assert_eq!(row.status, RowStatus::Ok);
            assert_eq!(row.value, Some(m.get(VariantId::from(i), VariantId::from(j))));
            checked += 1;
        }
    }
    assert_eq!(checked, 18);
    let g12 = pairwise_ates(&d, EstimatorKind::DiffInGeometrics).unwrap().get(VariantId(0), VariantId(1));
    assert!((g12 - (-0.13889)).abs() < 0.02, "{g12}");
}
