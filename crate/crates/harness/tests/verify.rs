use cup_core::tabular::CampaignConfig;
use cup_harness::gradcheck::run_grad_suite;
use cup_harness::verify::{run_verification, write_report};

#[test]
fn small_campaign_report() {
    let cfg = CampaignConfig {
        n_mdps: 5,
        ..CampaignConfig::default()
    };
    let report = run_verification(&cfg).unwrap();
    assert!(report.passed(), "{}", report.to_text());
    let ids: Vec<_> = report.rows.iter().map(|r| r.bound_id.as_str()).collect();
    assert_eq!(ids, ["guidance_soft", "guidance_hard", "improvement_soft", "improvement_hard", "perf_difference"]);
    // 5 mdps x 3 epsilons, each the worst of 5 perturbations
    assert_eq!(report.row("guidance_soft").unwrap().instances, 15);
    // 5 mdps x 3 epsilons x 2 mixtures
    assert_eq!(report.row("improvement_soft").unwrap().instances, 30);

    let d = tempfile::tempdir().unwrap();
    write_report(&report, d.path()).unwrap();
    let csv = std::fs::read_to_string(d.path().join("verify.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "bound_id,instances,min_margin,pass");
    assert_eq!(csv.lines().count(), 6);
    let txt = std::fs::read_to_string(d.path().join("verify.txt")).unwrap();
    assert_eq!(txt.matches("PASS").count(), 5);
}

#[test]
fn grad_suite_on_a_few_batches() {
    let reports = run_grad_suite(3, 42).unwrap();
    let names: Vec<_> = reports.iter().map(|r| r.loss).collect();
    assert_eq!(names, ["critic", "actor", "entropy", "cup_actor"]);
    for r in &reports {
        assert!(r.passed(), "{}: {}", r.loss, r.max_rel_error);
        assert_eq!(r.batches, 3);
    }
}
