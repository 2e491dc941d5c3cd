mod common;

use armcal::kinematics::*;
use nalgebra::{Matrix4, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_chain, random_joints};

/// Link transform written out entry by entry.
#[rustfmt::skip]
fn naive_link(link: &DhLink, q: f64) -> Matrix4<f64> {
    let th = q + link.theta_offset;
    let (ct, st, ca, sa) = (th.cos(), th.sin(), link.alpha.cos(), link.alpha.sin());
    Matrix4::new(
        ct, -st * ca, st * sa, link.a * ct,
        st, ct * ca, -ct * sa, link.a * st,
        0.0, sa, ca, link.d,
        0.0, 0.0, 0.0, 1.0,
    )
}

fn naive_frames(chain: &DhChain, joints: &JointConfig) -> Vec<Matrix4<f64>> {
    let mut frames = vec![Matrix4::identity()];
    for (i, link) in chain.links().iter().enumerate() {
        let next = frames[i] * naive_link(link, joints.0[i]);
        frames.push(next);
    }
    frames
}

fn perturbed_position(chain: &DhChain, joints: &JointConfig, k: usize, h: f64) -> Vector3<f64> {
    let mut flat = [0.0; PARAMS];
    flat[k] = h;
    end_effector_position(&apply_errors(chain, &KinematicErrorVector::from_flat(&flat)), joints)
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let chain = random_chain(&mut rng);
        let joints = random_joints(&mut rng);
        let jac = parameter_jacobian(&chain, &joints);
        for k in 0..PARAMS {
            let h = if ParamGroup::of_index(k).is_length() { 1e-4 } else { 1e-6 };
            let fd = (perturbed_position(&chain, &joints, k, h) - perturbed_position(&chain, &joints, k, -h)) / (2.0 * h);
            let col = jac.column(k);
            worst = worst.max((fd - col).norm() / col.norm().max(1.0));
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn forward_kinematics_matches_explicit_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let chain = random_chain(&mut rng);
        let joints = random_joints(&mut rng);
        let expected = *naive_frames(&chain, &joints).last().unwrap();
        let got = forward_kinematics(&chain, &joints).to_matrix();
        assert!((got - expected).abs().max() < 1e-12 * expected.abs().max().max(1.0));
    }
}

#[test]
fn rotations_stay_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let chain = random_chain(&mut rng);
        let r = forward_kinematics(&chain, &random_joints(&mut rng)).rotation;
        assert!((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max() <= 1e-9);
        assert!((r.determinant() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn offset_column_is_previous_z_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let chain = random_chain(&mut rng);
        let joints = random_joints(&mut rng);
        let frames = naive_frames(&chain, &joints);
        let jac = parameter_jacobian(&chain, &joints);
        for i in 0..JOINTS {
            let z = frames[i].fixed_view::<3, 1>(0, 2).into_owned();
            assert!((jac.column(JOINTS + i) - z).norm() < 1e-12);
        }
    }
}

#[test]
fn first_order_model_error_is_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let chain = random_chain(&mut rng);
    let joints = random_joints(&mut rng);
    let direction = common::small_errors(3);
    let p0 = end_effector_position(&chain, &joints);
    let jac = parameter_jacobian(&chain, &joints);
    let gap = |t: f64| {
        let dx = direction.scale(t);
        let exact = end_effector_position(&apply_errors(&chain, &dx), &joints);
        (exact - p0 - jac.matrix() * dx.to_vector()).norm()
    };
    let ratio = gap(1e-1) / gap(1e-2);
    assert!((80.0..120.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn transform_product_is_associative() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let chain = random_chain(&mut rng);
    let joints = random_joints(&mut rng);
    let t: Vec<HomogeneousTransform> = (0..3).map(|i| link_transform(chain.link(i), joints.0[i]).unwrap()).collect();
    let left = (t[0] * t[1]) * t[2];
    let right = t[0] * (t[1] * t[2]);
    assert!((left.to_matrix() - right.to_matrix()).abs().max() < 1e-9);
}

fn finite_vector() -> impl Strategy<Value = [f64; PARAMS]> {
    prop::array::uniform24(-1e3..1e3f64)
}

proptest! {
    #[test]
    fn error_vector_flat_round_trip(flat in finite_vector()) {
        let x = KinematicErrorVector::from_flat(&flat);
        prop_assert_eq!(x.to_flat(), flat);
        prop_assert_eq!(KinematicErrorVector::from_vector(&x.to_vector()), x);
    }

    #[test]
    fn error_application_is_additive(a in finite_vector(), b in finite_vector()) {
        let (xa, xb) = (KinematicErrorVector::from_flat(&a), KinematicErrorVector::from_flat(&b));
        let chain = DhChain::default_arm();
        let twice = apply_errors(&apply_errors(&chain, &xa), &xb);
        let once = apply_errors(&chain, &(xa + xb));
        for (l, r) in twice.links().iter().zip(once.links()) {
            prop_assert!((l.a - r.a).abs() < 1e-9 && (l.d - r.d).abs() < 1e-9);
            prop_assert!((l.theta_offset - r.theta_offset).abs() < 1e-9 && (l.alpha - r.alpha).abs() < 1e-9);
        }
    }

    #[test]
    fn param_text_round_trips(seed in any::<u64>()) {
        let chain = random_chain(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(DhChain::parse_params(&chain.to_param_string()).unwrap(), chain);
    }
}
