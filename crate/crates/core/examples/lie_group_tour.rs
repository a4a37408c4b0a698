//! Group elements, exp/log, composition and the three change-of-variables maps.
//!
//! cargo run --example lie_group_tour

use std::f64::consts::FRAC_PI_2;

use softgconv::lie_group::{
    change_of_variables, change_of_variables_inverse, compose, exp_map, inverse, log_map, relative,
    AlgebraCoeffs, GroupElement, GroupKind, Phi,
};

fn main() -> softgconv::Result<()> {
    let g = GroupElement::se2(1.0, 2.0, FRAC_PI_2);
    let h = GroupElement::se2(-0.5, 0.25, 0.3);
    println!("g        = {g:?}");
    println!("g^-1     = {:?}", inverse(&g));
    println!("g h      = {:?}", compose(&g, &h)?);
    println!("h^-1 g   = {:?}", relative(&g, &h)?);

    let a = log_map(&g);
    println!("log g    = {:?}", a.alpha);
    let back = exp_map(&a, GroupKind::SE2)?;
    println!("exp log g deviation = {:.2e}", back.deviation(&g));

    let t = exp_map(&AlgebraCoeffs::new(vec![3.0, -1.0]), GroupKind::T2)?;
    println!("T(2) exp = {t:?}");

    for phi in [Phi::Phi1, Phi::Phi2, Phi::Phi3] {
        let mapped = change_of_variables(phi, (g, h))?;
        let (u, v) = change_of_variables_inverse(phi, mapped)?;
        println!(
            "{phi:?}: round trip deviation {:.2e}",
            u.deviation(&g).max(v.deviation(&h))
        );
    }
    Ok(())
}
