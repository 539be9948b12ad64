//! The field expression language: parsing, evaluation, printing and errors.

use dflm::expr::{parse_expression, Var, Vars};

fn main() {
    for src in ["2+3*4", "x1*x1 + sin(x2)", "-2^2", "2^3^2", "exp(-(x1^2 + x2^2) / 0.1) * u", "sqrt(abs(x1 - x2)) / (1 + tanh(u))"] {
        let e = parse_expression(src).unwrap();
        let v = e.eval(&Vars::at([0.5, 0.0], 1.0));
        println!("{src:<40} -> {e}  = {v:?}  (uses u: {})", e.depends_on(Var::U));
    }
    for bad in ["x3 + 1", "2 *", "sin 2", "(1 + 2"] {
        println!("{bad:<40} -> {}", parse_expression(bad).unwrap_err());
    }
    let e = parse_expression("1 / x1").unwrap();
    println!("{:<40} -> {:?}", "1 / x1 at x1 = 0", e.eval(&Vars::at([0.0, 0.0], 0.0)));
}
