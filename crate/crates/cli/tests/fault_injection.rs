use tfslab::battery::{run_all, table};
use tfslab_core::mlf::fault::set_kernel_perturbation;

#[test]
fn perturbed_kernels_make_the_battery_fail() {
    set_kernel_perturbation(1e-3);
    let reports = run_all();
    set_kernel_perturbation(0.0);
    eprintln!("{}", table(&reports));
    for id in [4, 11] {
        let r = &reports[id - 1];
        assert!(!r.passed && !r.within_tolerance, "criterion {id} survived a perturbed kernel: {}", r.line());
    }
}
