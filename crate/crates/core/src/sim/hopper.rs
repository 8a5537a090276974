//! Planar one-legged hopper: a floating trunk with a revolute hip, a
//! revolute knee and a point foot.
//!
//! Generalized coordinates are `q = [x, y, rot, hip, knee]`, where `(x, y)`
//! is the trunk centre and `rot = 0` is upright. Link directions point "down
//! the leg": a link with absolute angle `phi` has unit direction
//! `(sin phi, -cos phi)`. Equations of motion come from projecting each
//! body's Newton-Euler equations through its Jacobian, so
//! `M(q) qdd = B tau + Q_gravity - bias(q, qd) + Q_limits + J_c^T F_c`.

use nalgebra::{SMatrix, SVector};

use super::config::KvConfig;
use super::spec::{wrap_angle, EnvId, EnvSpec, StateLayout};
use super::SimState;
use crate::error::Result;

pub const X: usize = 0;
pub const Y: usize = 1;
pub const ROT: usize = 2;
pub const VX: usize = 3;
pub const VY: usize = 4;
pub const OMEGA: usize = 5;
pub const HIP: usize = 6;
pub const KNEE: usize = 7;
pub const HIP_VEL: usize = 8;
pub const KNEE_VEL: usize = 9;

type Mat5 = SMatrix<f64, 5, 5>;
type Vec5 = SVector<f64, 5>;

#[derive(Clone, Debug, PartialEq)]
pub struct Hopper {
    pub trunk_mass: f64,
    pub trunk_length: f64,
    pub thigh_mass: f64,
    pub thigh_length: f64,
    pub shin_mass: f64,
    pub shin_length: f64,
    pub gravity: f64,
    pub torque_limit: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction: f64,
    pub hip_limits: (f64, f64),
    pub knee_limits: (f64, f64),
    pub limit_stiffness: f64,
    pub limit_damping: f64,
    pub max_joint_speed: f64,
    /// Contact integration steps per `sim_dt`.
    pub contact_substeps: usize,
}

/// Position, Jacobian and velocity-product acceleration of a body point.
#[derive(Clone, Copy, Debug)]
struct PointKin {
    pos: [f64; 2],
    jac: [[f64; 5]; 2],
    bias: [f64; 2],
}

impl PointKin {
    fn velocity(&self, qd: &Vec5) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (r, row) in self.jac.iter().enumerate() {
            v[r] = row.iter().zip(qd.iter()).map(|(a, b)| a * b).sum();
        }
        v
    }

    fn row(&self, r: usize) -> Vec5 {
        Vec5::from_row_slice(&self.jac[r])
    }
}

impl Hopper {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        Ok(Hopper {
            trunk_mass: cfg.get_or("trunk_mass", 4.0)?,
            trunk_length: cfg.get_or("trunk_length", 0.4)?,
            thigh_mass: cfg.get_or("thigh_mass", 2.0)?,
            thigh_length: cfg.get_or("thigh_length", 0.45)?,
            shin_mass: cfg.get_or("shin_mass", 1.0)?,
            shin_length: cfg.get_or("shin_length", 0.5)?,
            gravity: cfg.get_or("gravity", 9.81)?,
            torque_limit: cfg.get_or("torque_limit", 20.0)?,
            contact_stiffness: cfg.get_or("contact_stiffness", 1.0e5)?,
            contact_damping: cfg.get_or("contact_damping", 1.0e3)?,
            friction: cfg.get_or("friction", 1.0)?,
            hip_limits: (cfg.get_or("hip_min", -1.5)?, cfg.get_or("hip_max", 1.5)?),
            knee_limits: (cfg.get_or("knee_min", -2.6)?, cfg.get_or("knee_max", 0.2)?),
            limit_stiffness: cfg.get_or("limit_stiffness", 5000.0)?,
            limit_damping: cfg.get_or("limit_damping", 50.0)?,
            max_joint_speed: cfg.get_or("max_joint_speed", 20.0)?,
            contact_substeps: cfg.get_or("contact_substeps", 20)?,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.trunk_mass + self.thigh_mass + self.shin_mass
    }

    fn standing_height(&self) -> f64 {
        self.trunk_length / 2.0 + self.thigh_length + self.shin_length
    }

    pub fn spec(&self) -> EnvSpec {
        use std::f64::consts::PI;
        let mut pose = SimState::zeros(10);
        // Straight leg resting on the foot at static penetration.
        pose[Y] = self.standing_height() - self.total_mass() * self.gravity / self.contact_stiffness;
        let caps = vec![
            (-2.0, 2.0),
            (0.0, 2.2),
            (-PI, PI),
            (-3.0, 3.0),
            (-3.0, 3.0),
            (-6.0, 6.0),
            self.hip_limits,
            self.knee_limits,
            (-self.max_joint_speed, self.max_joint_speed),
            (-self.max_joint_speed, self.max_joint_speed),
        ];
        EnvSpec {
            id: EnvId::PlanarHopper,
            state_dim: 10,
            action_dim: 2,
            sim_dt: 0.01,
            action_repeat: 10,
            torque_bounds: vec![(-self.torque_limit, self.torque_limit); 2],
            fall_height_threshold: Some(0.5 * self.standing_height()),
            upright_cone: Some(1.0),
            default_pose: pose,
            state_caps: caps,
            layout: StateLayout {
                root_pos: vec![X, Y],
                root_height: Some(Y),
                root_rot: Some(ROT),
                root_vel: vec![VX, VY],
                root_angvel: Some(OMEGA),
                joint_angles: vec![HIP, KNEE],
                joint_vels: vec![HIP_VEL, KNEE_VEL],
                wrapped: vec![ROT],
                translation_invariant: vec![X],
                upright_angle: Some(ROT),
            },
            has_ground: true,
        }
    }

    /// Lying on its side, straight leg, resting on the ground.
    pub fn fallen_pose(&self) -> SimState {
        let mut s = SimState::zeros(10);
        s[ROT] = std::f64::consts::FRAC_PI_2;
        s
    }

    fn split(s: &[f64]) -> (Vec5, Vec5) {
        (
            Vec5::new(s[X], s[Y], s[ROT], s[HIP], s[KNEE]),
            Vec5::new(s[VX], s[VY], s[OMEGA], s[HIP_VEL], s[KNEE_VEL]),
        )
    }

    fn point(&self, coeffs: [f64; 3], q: &Vec5, qd: &Vec5) -> PointKin {
        let phi = [q[2], q[2] + q[3], q[2] + q[3] + q[4]];
        let phid = [qd[2], qd[2] + qd[3], qd[2] + qd[3] + qd[4]];
        let mut pos = [q[0], q[1]];
        let mut jac = [[1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0]];
        let mut bias = [0.0; 2];
        for k in 0..3 {
            let c = coeffs[k];
            if c == 0.0 {
                continue;
            }
            let (sin, cos) = phi[k].sin_cos();
            pos[0] += c * sin;
            pos[1] -= c * cos;
            // d/dphi of (sin, -cos) is (cos, sin); link k depends on q[2..=2+k].
            for j in 2..=2 + k {
                jac[0][j] += c * cos;
                jac[1][j] += c * sin;
            }
            let w2 = phid[k] * phid[k];
            bias[0] -= c * sin * w2;
            bias[1] += c * cos * w2;
        }
        PointKin { pos, jac, bias }
    }

    fn half_trunk(&self) -> f64 {
        self.trunk_length / 2.0
    }

    /// (mass, rotational inertia, point coefficients, angular Jacobian row).
    fn bodies(&self) -> [(f64, f64, [f64; 3], [f64; 5]); 3] {
        let a0 = self.half_trunk();
        let (l1, l2) = (self.thigh_length, self.shin_length);
        [
            (
                self.trunk_mass,
                self.trunk_mass * self.trunk_length.powi(2) / 12.0,
                [0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0, 0.0],
            ),
            (
                self.thigh_mass,
                self.thigh_mass * l1 * l1 / 12.0,
                [a0, l1 / 2.0, 0.0],
                [0.0, 0.0, 1.0, 1.0, 0.0],
            ),
            (
                self.shin_mass,
                self.shin_mass * l2 * l2 / 12.0,
                [a0, l1, l2 / 2.0],
                [0.0, 0.0, 1.0, 1.0, 1.0],
            ),
        ]
    }

    /// Head, hip, knee and foot, in that order.
    fn contact_coeffs(&self) -> [[f64; 3]; 4] {
        let a0 = self.half_trunk();
        let (l1, l2) = (self.thigh_length, self.shin_length);
        [[-a0, 0.0, 0.0], [a0, 0.0, 0.0], [a0, l1, 0.0], [a0, l1, l2]]
    }

    fn contact_points(&self, s: &[f64]) -> [PointKin; 4] {
        let (q, qd) = Self::split(s);
        self.contact_coeffs().map(|c| self.point(c, &q, &qd))
    }

    /// Height of the lowest contact point above the ground plane.
    pub fn lowest_point(&self, s: &[f64]) -> f64 {
        self.contact_points(s).iter().map(|p| p.pos[1]).fold(f64::INFINITY, f64::min)
    }

    pub fn foot_height(&self, s: &[f64]) -> f64 {
        self.contact_points(s)[3].pos[1]
    }

    /// Kinetic plus gravitational potential energy.
    pub fn mechanical_energy(&self, s: &[f64]) -> f64 {
        let (q, qd) = Self::split(s);
        let mut e = 0.0;
        for (m, inertia, coeffs, w) in self.bodies() {
            let p = self.point(coeffs, &q, &qd);
            let v = p.velocity(&qd);
            let omega: f64 = w.iter().zip(qd.iter()).map(|(a, b)| a * b).sum();
            e += 0.5 * m * (v[0] * v[0] + v[1] * v[1]) + 0.5 * inertia * omega * omega;
            e += m * self.gravity * p.pos[1];
        }
        e
    }

    /// Penalty torque outside the joint range. `inv_inertia` is the joint's
    /// diagonal entry of the inverse mass matrix.
    fn limit_torque(&self, q: f64, qd: f64, (lo, hi): (f64, f64), inv_inertia: f64, h: f64, rows: usize) -> f64 {
        let c = self.limit_damping.min(1.0 / (inv_inertia * h * rows as f64));
        if q < lo {
            self.limit_stiffness * (lo - q) - c * qd.min(0.0)
        } else if q > hi {
            self.limit_stiffness * (hi - q) - c * qd.max(0.0)
        } else {
            0.0
        }
    }

    /// Caps joint speeds with inelastic impulses along `M^-1 e_j`, which
    /// never adds kinetic energy (a plain clamp can, through the coupling).
    fn limit_joint_speed(&self, minv: &Mat5, qd: &mut Vec5) {
        let cap = self.max_joint_speed;
        for _ in 0..2 {
            let over: Vec<usize> = (3..5).filter(|&j| qd[j].abs() > cap).collect();
            match over.as_slice() {
                [] => return,
                [j] => {
                    let excess = qd[*j] - qd[*j].clamp(-cap, cap);
                    let lambda = -excess / minv[(*j, *j)];
                    *qd += minv.column(*j) * lambda;
                }
                _ => {
                    let a = minv.fixed_view::<2, 2>(3, 3).into_owned();
                    let excess = nalgebra::Vector2::new(
                        qd[3] - qd[3].clamp(-cap, cap),
                        qd[4] - qd[4].clamp(-cap, cap),
                    );
                    let Some(lambda) = a.cholesky().map(|c| c.solve(&(-excess))) else {
                        return;
                    };
                    *qd += minv.column(3) * lambda[0] + minv.column(4) * lambda[1];
                }
            }
        }
        for j in 3..5 {
            qd[j] = qd[j].clamp(-cap, cap);
        }
    }

    /// Advances one integration step of length `h`.
    ///
    /// `suspended` pins the trunk in place and switches gravity off; it is
    /// used for joint-range calibration.
    pub fn substep(&self, s: &mut [f64], torque: &[f64], h: f64, suspended: bool) {
        let (q, qd) = Self::split(s);
        let g = if suspended { 0.0 } else { self.gravity };

        let mut mass = Mat5::zeros();
        let mut force = Vec5::zeros();
        for (m, inertia, coeffs, w) in self.bodies() {
            let p = self.point(coeffs, &q, &qd);
            let jx = p.row(0);
            let jy = p.row(1);
            let jw = Vec5::from_row_slice(&w);
            mass += m * (jx * jx.transpose() + jy * jy.transpose()) + inertia * jw * jw.transpose();
            force -= m * (jx * p.bias[0] + jy * p.bias[1]);
            force -= jy * (m * g);
        }
        force[3] += torque[0];
        force[4] += torque[1];

        let mut qd_new = if suspended {
            let mj = mass.fixed_view::<2, 2>(3, 3).into_owned();
            let mut fj = force.fixed_rows::<2>(3).into_owned();
            let Some(chol) = mj.cholesky() else {
                s.iter_mut().for_each(|v| *v = f64::NAN);
                return;
            };
            let minv = chol.inverse();
            fj[0] += self.limit_torque(q[3], qd[3], self.hip_limits, minv[(0, 0)], h, 2);
            fj[1] += self.limit_torque(q[4], qd[4], self.knee_limits, minv[(1, 1)], h, 2);
            let sol = chol.solve(&fj);
            qd + Vec5::new(0.0, 0.0, 0.0, sol[0], sol[1]) * h
        } else {
            let Some(chol) = mass.cholesky() else {
                s.iter_mut().for_each(|v| *v = f64::NAN);
                return;
            };
            let points = self.contact_coeffs().map(|c| self.point(c, &q, &qd));
            let touching: Vec<&PointKin> = points.iter().filter(|p| p.pos[1] < 0.0).collect();
            // Every damped row shares the budget, so the combined explicit
            // damping cannot remove more than the velocity it acts on.
            let rows = 2 + 2 * touching.len();
            let mut total = force;
            let minv = chol.inverse();
            total[3] += self.limit_torque(q[3], qd[3], self.hip_limits, minv[(3, 3)], h, rows);
            total[4] += self.limit_torque(q[4], qd[4], self.knee_limits, minv[(4, 4)], h, rows);
            for p in touching {
                let depth = -p.pos[1];
                let v = p.velocity(&qd);
                let jx = p.row(0);
                let jy = p.row(1);
                let m_n = 1.0 / jy.dot(&(minv * jy));
                let m_t = 1.0 / jx.dot(&(minv * jx));
                let c_n = self.contact_damping.min(m_n / (h * rows as f64));
                let c_t = self.contact_damping.min(m_t / (h * rows as f64));
                let f_n = (self.contact_stiffness * depth - c_n * v[1]).max(0.0);
                let f_t = (-c_t * v[0]).clamp(-self.friction * f_n, self.friction * f_n);
                total += jx * f_t + jy * f_n;
            }
            let mut qd_new = qd + chol.solve(&total) * h;
            self.limit_joint_speed(&minv, &mut qd_new);
            qd_new
        };
        if suspended {
            for j in 3..5 {
                qd_new[j] = qd_new[j].clamp(-self.max_joint_speed, self.max_joint_speed);
            }
        }
        let q_new = q + qd_new * h;

        s[X] = q_new[0];
        s[Y] = q_new[1];
        s[ROT] = wrap_angle(q_new[2]);
        s[HIP] = q_new[3];
        s[KNEE] = q_new[4];
        s[VX] = qd_new[0];
        s[VY] = qd_new[1];
        s[OMEGA] = qd_new[2];
        s[HIP_VEL] = qd_new[3];
        s[KNEE_VEL] = qd_new[4];
    }
}
