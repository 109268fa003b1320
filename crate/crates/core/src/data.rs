//! Molecular samples, neighbour lists and the Lennard-Jones label oracle.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

pub type Vec3 = [f64; 3];

/// One labelled configuration. `atomic_numbers` are 1-based species ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularSample {
    pub atomic_numbers: Vec<u32>,
    pub positions: Vec<Vec3>,
    pub energy: f64,
    pub forces: Vec<Vec3>,
}

impl MolecularSample {
    pub fn new(
        atomic_numbers: Vec<u32>,
        positions: Vec<Vec3>,
        energy: f64,
        forces: Vec<Vec3>,
    ) -> Result<Self> {
        let s = MolecularSample {
            atomic_numbers,
            positions,
            energy,
            forces,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.atomic_numbers.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "sample needs at least 2 atoms, got {n}"
            )));
        }
        if self.positions.len() != n || self.forces.len() != n {
            return Err(Error::invalid(format!(
                "{} atoms but {} positions and {} forces",
                n,
                self.positions.len(),
                self.forces.len()
            )));
        }
        if self.atomic_numbers.contains(&0) {
            return Err(Error::invalid("atomic numbers must be positive"));
        }
        let finite = self.energy.is_finite()
            && self
                .positions
                .iter()
                .chain(&self.forces)
                .all(|p| p.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite(String::from(
                "sample positions, forces or energy",
            )));
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.atomic_numbers.len()
    }
}

/// Directed neighbour pairs within a cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub senders: Arc<[usize]>,
    pub receivers: Arc<[usize]>,
    pub distances: Vec<f64>,
    /// `(positions[receiver] - positions[sender]) / distance`.
    pub unit_vectors: Vec<Vec3>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }

    /// Builds an edge list from explicit pairs without a cutoff check.
    pub fn from_pairs(positions: &[Vec3], pairs: &[(usize, usize)]) -> Result<Self> {
        let mut senders = Vec::with_capacity(pairs.len());
        let mut receivers = Vec::with_capacity(pairs.len());
        let mut distances = Vec::with_capacity(pairs.len());
        let mut unit_vectors = Vec::with_capacity(pairs.len());
        for &(s, r) in pairs {
            let d = sub(positions[r], positions[s]);
            let dist = norm(d);
            if dist == 0.0 {
                return Err(Error::CoincidentAtoms(s.min(r), s.max(r)));
            }
            senders.push(s);
            receivers.push(r);
            distances.push(dist);
            unit_vectors.push([d[0] / dist, d[1] / dist, d[2] / dist]);
        }
        Ok(EdgeList {
            senders: senders.into(),
            receivers: receivers.into(),
            distances,
            unit_vectors,
        })
    }
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    libm::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
}

/// All directed pairs with `0 < r_ij < cutoff`, sender-major order.
pub fn build_edges(positions: &[Vec3], cutoff: f64) -> Result<EdgeList> {
    if !(cutoff > 0.0) {
        return Err(Error::invalid("cutoff must be positive"));
    }
    let n = positions.len();
    let mut pairs = Vec::new();
    for s in 0..n {
        for r in 0..n {
            if s == r {
                continue;
            }
            let dist = norm(sub(positions[r], positions[s]));
            if dist == 0.0 {
                return Err(Error::CoincidentAtoms(s.min(r), s.max(r)));
            }
            if dist < cutoff {
                pairs.push((s, r));
            }
        }
    }
    EdgeList::from_pairs(positions, &pairs)
}

/// Symmetric per-species-pair Lennard-Jones parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    species_count: usize,
    epsilon: Vec<f64>,
    sigma: Vec<f64>,
}

impl PairTable {
    pub fn uniform(species_count: usize, epsilon: f64, sigma: f64) -> Self {
        let len = species_count * species_count;
        PairTable {
            species_count,
            epsilon: vec![epsilon; len],
            sigma: vec![sigma; len],
        }
    }

    /// epsilon ~ U(0.8, 1.2), sigma ~ U(0.9, 1.1), symmetric in the pair.
    pub fn random(species_count: usize, seed: u64) -> Self {
        let mut table = PairTable::uniform(species_count, 1.0, 1.0);
        let mut rng = rng::seeded(seed);
        for a in 0..species_count {
            for b in a..species_count {
                let eps = rng.gen_range(0.8..1.2);
                let sig = rng.gen_range(0.9..1.1);
                table.set(a, b, eps, sig);
            }
        }
        table
    }

    pub fn set(&mut self, a: usize, b: usize, epsilon: f64, sigma: f64) {
        let s = self.species_count;
        self.epsilon[a * s + b] = epsilon;
        self.epsilon[b * s + a] = epsilon;
        self.sigma[a * s + b] = sigma;
        self.sigma[b * s + a] = sigma;
    }

    /// Same table with every epsilon and sigma multiplied by the factors.
    pub fn scaled(&self, epsilon_factor: f64, sigma_factor: f64) -> Self {
        PairTable {
            species_count: self.species_count,
            epsilon: self.epsilon.iter().map(|e| e * epsilon_factor).collect(),
            sigma: self.sigma.iter().map(|s| s * sigma_factor).collect(),
        }
    }

    pub fn species_count(&self) -> usize {
        self.species_count
    }

    pub fn epsilon(&self, a: usize, b: usize) -> f64 {
        self.epsilon[a * self.species_count + b]
    }

    pub fn sigma(&self, a: usize, b: usize) -> f64 {
        self.sigma[a * self.species_count + b]
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }

    fn index(&self, z: u32) -> Result<usize> {
        let i = z as usize;
        if i == 0 || i > self.species_count {
            return Err(Error::SpeciesOutOfRange {
                species: z,
                species_count: self.species_count as u32,
            });
        }
        Ok(i - 1)
    }
}

/// Pair energy `4 eps [(s/r)^12 - (s/r)^6]` and the radial force magnitude
/// `-dE/dr`.
#[inline]
pub fn lj_pair(r: f64, epsilon: f64, sigma: f64) -> (f64, f64) {
    let sr2 = (sigma / r) * (sigma / r);
    let sr6 = sr2 * sr2 * sr2;
    let sr12 = sr6 * sr6;
    (
        4.0 * epsilon * (sr12 - sr6),
        24.0 * epsilon * (2.0 * sr12 - sr6) / r,
    )
}

/// Total Lennard-Jones energy over all pairs (no cutoff) and the analytic
/// forces `-dE/dx_i`.
pub fn oracle_energy_forces(
    positions: &[Vec3],
    atomic_numbers: &[u32],
    table: &PairTable,
) -> Result<(f64, Vec<Vec3>)> {
    if positions.len() != atomic_numbers.len() {
        return Err(Error::invalid("positions and species lengths differ"));
    }
    let species = atomic_numbers
        .iter()
        .map(|&z| table.index(z))
        .collect::<Result<Vec<_>>>()?;
    let n = positions.len();
    let mut energy = 0.0;
    let mut forces = vec![[0.0; 3]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sub(positions[i], positions[j]);
            let r = norm(d);
            if r == 0.0 {
                return Err(Error::CoincidentAtoms(i, j));
            }
            let (a, b) = (species[i], species[j]);
            let (e, f) = lj_pair(r, table.epsilon(a, b), table.sigma(a, b));
            energy += e;
            for k in 0..3 {
                let c = f * d[k] / r;
                forces[i][k] += c;
                forces[j][k] -= c;
            }
        }
    }
    Ok((energy, forces))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// 80/10/10 split assignment, a pure function of `(seed, index)`.
pub fn split_of(seed: u64, index: usize) -> Split {
    match rng::derive(seed ^ 0x5b71_7a11, index as u64) % 10 {
        0 => Split::Val,
        1 => Split::Test,
        _ => Split::Train,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetMeta {
    pub name: String,
    /// Seed for generation and for split assignment.
    pub seed: u64,
    pub potential: Option<PairTable>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<MolecularSample>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(samples: Vec<MolecularSample>, meta: DatasetMeta) -> Self {
        Dataset { samples, meta }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| split_of(self.meta.seed, i) == split)
            .collect()
    }

    /// Owned copy of one split, keeping the metadata.
    pub fn split(&self, split: Split) -> Dataset {
        Dataset {
            samples: self
                .split_indices(split)
                .into_iter()
                .map(|i| self.samples[i].clone())
                .collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn mean_abs_force(&self) -> f64 {
        let (sum, count) = self.samples.iter().fold((0.0, 0usize), |(s, c), x| {
            let add: f64 = x
                .forces
                .iter()
                .flat_map(|f| f.iter())
                .map(|v| libm::fabs(*v))
                .sum();
            (s + add, c + 3 * x.n_atoms())
        });
        sum / count.max(1) as f64
    }
}

/// Parameters of the synthetic cluster generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub name: String,
    pub count: usize,
    pub atoms_min: usize,
    pub atoms_max: usize,
    pub species_count: usize,
    /// Edge of the cube atoms are placed in.
    pub box_size: f64,
    pub seed: u64,
    pub potential: PairTable,
    pub relax_steps: usize,
    pub relax_step: f64,
    /// Per-step displacement cap during relaxation.
    pub max_displacement: f64,
    /// Rejection threshold as a fraction of the pair sigma.
    pub min_separation: f64,
    pub max_attempts: usize,
}

impl GeneratorSpec {
    /// Upstream defaults: 3 species, random pair table, 5 to 8 atoms.
    pub fn upstream(count: usize, seed: u64) -> Self {
        GeneratorSpec {
            name: String::from("upstream"),
            count,
            atoms_min: 5,
            atoms_max: 8,
            species_count: 3,
            box_size: 2.0,
            seed,
            potential: PairTable::random(3, rng::derive(seed, u64::MAX)),
            relax_steps: 20,
            relax_step: 0.01,
            max_displacement: 0.05,
            min_separation: 0.7,
            max_attempts: 10_000,
        }
    }

    /// Shifted-potential task: epsilon x1.5, sigma x1.1, box scaled with sigma.
    pub fn downstream(&self, count: usize, seed: u64) -> Self {
        self.shifted(count, seed, 1.5, 1.1)
    }

    pub fn shifted(&self, count: usize, seed: u64, epsilon_factor: f64, sigma_factor: f64) -> Self {
        GeneratorSpec {
            name: String::from("downstream"),
            count,
            seed,
            box_size: self.box_size * sigma_factor,
            potential: self.potential.scaled(epsilon_factor, sigma_factor),
            ..self.clone()
        }
    }
}

fn min_separation_ok(positions: &[Vec3], species: &[u32], table: &PairTable, factor: f64) -> bool {
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let sigma = table.sigma(species[i] as usize - 1, species[j] as usize - 1);
            if norm(sub(positions[i], positions[j])) < factor * sigma {
                return false;
            }
        }
    }
    true
}

/// One labelled sample from the stream `(spec.seed, index)`.
pub fn generate_sample(spec: &GeneratorSpec, index: usize) -> Result<MolecularSample> {
    let mut rng = rng::stream(spec.seed, index as u64);
    let table = &spec.potential;
    for _ in 0..spec.max_attempts {
        let n = rng.gen_range(spec.atoms_min..=spec.atoms_max);
        let species: Vec<u32> = (0..n)
            .map(|_| rng.gen_range(1..=spec.species_count as u32))
            .collect();
        let mut positions: Vec<Vec3> = Vec::with_capacity(n);
        let mut placed = true;
        for i in 0..n {
            let mut ok = false;
            for _ in 0..spec.max_attempts {
                let p = [
                    rng.gen_range(0.0..spec.box_size),
                    rng.gen_range(0.0..spec.box_size),
                    rng.gen_range(0.0..spec.box_size),
                ];
                let clear = positions.iter().enumerate().all(|(j, q)| {
                    let sigma = table.sigma(species[i] as usize - 1, species[j] as usize - 1);
                    norm(sub(p, *q)) >= spec.min_separation * sigma
                });
                if clear {
                    positions.push(p);
                    ok = true;
                    break;
                }
            }
            if !ok {
                placed = false;
                break;
            }
        }
        if !placed {
            continue;
        }
        for _ in 0..spec.relax_steps {
            let (_, forces) = oracle_energy_forces(&positions, &species, table)?;
            for (p, f) in positions.iter_mut().zip(&forces) {
                let mut step = [
                    f[0] * spec.relax_step,
                    f[1] * spec.relax_step,
                    f[2] * spec.relax_step,
                ];
                let len = norm(step);
                if len > spec.max_displacement {
                    let s = spec.max_displacement / len;
                    step.iter_mut().for_each(|v| *v *= s);
                }
                for k in 0..3 {
                    p[k] += step[k];
                }
            }
        }
        if !min_separation_ok(&positions, &species, table, spec.min_separation) {
            continue;
        }
        let (energy, forces) = oracle_energy_forces(&positions, &species, table)?;
        return MolecularSample::new(species, positions, energy, forces);
    }
    Err(Error::PlacementFailed(spec.max_attempts))
}

/// `spec.count` samples; sample `i` depends only on `(spec.seed, i)`.
pub fn generate_dataset(spec: &GeneratorSpec) -> Result<Dataset> {
    if spec.count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    if spec.atoms_min < 2 || spec.atoms_min > spec.atoms_max {
        return Err(Error::invalid("atoms range must satisfy 2 <= min <= max"));
    }
    if spec.species_count == 0 || spec.potential.species_count() != spec.species_count {
        return Err(Error::invalid("pair table does not match species count"));
    }
    let samples = (0..spec.count)
        .map(|i| generate_sample(spec, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(
        samples,
        DatasetMeta {
            name: spec.name.clone(),
            seed: spec.seed,
            potential: Some(spec.potential.clone()),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_atoms_inside_cutoff() {
        let e = build_edges(&[[0.0; 3], [0.9, 0.0, 0.0]], 1.0).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(&*e.senders, &[0, 1]);
        assert_eq!(&*e.receivers, &[1, 0]);
        assert_eq!(e.unit_vectors[0], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn two_atoms_outside_cutoff() {
        let e = build_edges(&[[0.0; 3], [1.1, 0.0, 0.0]], 1.0).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn unit_square_excludes_diagonals() {
        let pos = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
        ];
        // brute-force: count directed pairs below the cutoff
        let mut expected = 0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j && norm(sub(pos[i], pos[j])) < 1.2 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 8);
        assert_eq!(build_edges(&pos, 1.2).unwrap().len(), 8);
    }

    #[test]
    fn coincident_atoms_rejected() {
        let res = build_edges(&[[0.5; 3], [0.5; 3]], 1.0);
        assert_eq!(res, Err(Error::CoincidentAtoms(0, 1)));
        let t = PairTable::uniform(1, 1.0, 1.0);
        assert!(oracle_energy_forces(&[[0.5; 3], [0.5; 3]], &[1, 1], &t).is_err());
    }

    #[test]
    fn bad_cutoff_rejected() {
        assert!(build_edges(&[[0.0; 3], [1.0, 0.0, 0.0]], 0.0).is_err());
    }

    #[test]
    fn lj_reference_values() {
        let t = PairTable::uniform(1, 1.0, 1.0);
        let (e, _) = oracle_energy_forces(&[[0.0; 3], [1.0, 0.0, 0.0]], &[1, 1], &t).unwrap();
        assert_eq!(e, 0.0);

        let rmin = libm::pow(2.0, 1.0 / 6.0);
        let (e, f) = oracle_energy_forces(&[[0.0; 3], [rmin, 0.0, 0.0]], &[1, 1], &t).unwrap();
        assert!((e + 1.0).abs() < 1e-12);
        assert!(f.iter().flatten().all(|v| v.abs() < 1e-9));

        let (e, _) = oracle_energy_forces(&[[0.0; 3], [0.0, 2.0, 0.0]], &[1, 1], &t).unwrap();
        let expected = 4.0 * (libm::pow(2.0, -12.0) - libm::pow(2.0, -6.0));
        assert_eq!(expected, -0.0615234375);
        assert!((e - expected).abs() < 1e-15);
    }

    #[test]
    fn species_out_of_table_rejected() {
        let t = PairTable::uniform(2, 1.0, 1.0);
        let res = oracle_energy_forces(&[[0.0; 3], [1.0, 0.0, 0.0]], &[1, 3], &t);
        assert!(matches!(
            res,
            Err(Error::SpeciesOutOfRange { species: 3, .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GeneratorSpec::upstream(1, 7);
        assert_eq!(
            generate_dataset(&spec).unwrap(),
            generate_dataset(&spec).unwrap()
        );
    }

    #[test]
    fn generated_samples_respect_min_separation() {
        let spec = GeneratorSpec::upstream(100, 3);
        let ds = generate_dataset(&spec).unwrap();
        assert_eq!(ds.len(), 100);
        for s in &ds.samples {
            assert!(min_separation_ok(
                &s.positions,
                &s.atomic_numbers,
                &spec.potential,
                0.7
            ));
            assert!((spec.atoms_min..=spec.atoms_max).contains(&s.n_atoms()));
        }
    }

    #[test]
    fn shifted_potential_changes_labels() {
        let up = GeneratorSpec::upstream(1, 11);
        let down = up.downstream(1, 11);
        let s = generate_sample(&up, 0).unwrap();
        let (e_down, f_down) =
            oracle_energy_forces(&s.positions, &s.atomic_numbers, &down.potential).unwrap();
        assert_ne!(e_down, s.energy);
        assert_ne!(f_down, s.forces);
    }

    #[test]
    fn zero_count_rejected() {
        let mut spec = GeneratorSpec::upstream(1, 0);
        spec.count = 0;
        assert!(generate_dataset(&spec).is_err());
    }

    #[test]
    fn impossible_placement_fails() {
        let mut spec = GeneratorSpec::upstream(1, 0);
        spec.atoms_min = 8;
        spec.box_size = 0.2;
        spec.max_attempts = 50;
        assert_eq!(generate_dataset(&spec), Err(Error::PlacementFailed(50)));
    }

    #[test]
    fn split_is_pure_and_covers_all() {
        let a: Vec<_> = (0..1000).map(|i| split_of(5, i)).collect();
        let b: Vec<_> = (0..1000).map(|i| split_of(5, i)).collect();
        assert_eq!(a, b);
        let val = a.iter().filter(|s| **s == Split::Val).count();
        let test = a.iter().filter(|s| **s == Split::Test).count();
        assert!(val > 50 && val < 150 && test > 50 && test < 150);
    }
}
