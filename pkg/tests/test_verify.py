from deflate_lab.verify import (
    Check, check_als_one_sweep, check_gd_gradient, check_rates, check_w_hat, check_wedin, check_weyl,
)


def test_check_line_formats_status():
    assert Check("x", True, 1.0, 2.0).line().startswith("[PASS] x value=1")
    assert Check("x", False).line() == "[FAIL] x"
    assert Check("x", None, detail="no cores").line() == "[SKIP] x no cores"


def test_cheap_invariants_hold():
    for check in (check_weyl(3, pairs=50), check_wedin(3, pairs=50), check_als_one_sweep(3),
                  check_gd_gradient(3), check_rates(3), check_w_hat(3)):
        assert check.passed, check.line()
