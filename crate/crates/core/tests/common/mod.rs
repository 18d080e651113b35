#![allow(dead_code)]

use prepsense::{EmbeddingTable, PrepInstance};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn table(dim: usize, rows: Vec<(String, Vec<f64>)>) -> EmbeddingTable {
    EmbeddingTable::from_rows(dim, rows).expect("valid rows").table
}

pub fn gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// `n` tokens named `{prefix}{i}` scattered around `center` with spread `sigma`.
pub fn word_cloud<R: Rng>(rng: &mut R, prefix: &str, n: usize, center: &[f64], sigma: f64) -> Vec<(String, Vec<f64>)> {
    (0..n)
        .map(|i| {
            let noise = gaussian(rng, center.len());
            let v = center.iter().zip(&noise).map(|(c, e)| c + sigma * e).collect();
            (format!("{prefix}{i}"), v)
        })
        .collect()
}

/// An instance whose sentence is `left ++ [prep] ++ right`.
pub fn instance(id: &str, left: &[String], prep: &str, right: &[String], sense: Option<&str>) -> PrepInstance {
    let mut tokens = left.to_vec();
    tokens.push(prep.to_string());
    tokens.extend_from_slice(right);
    PrepInstance::new(id, tokens, left.len(), sense.map(str::to_string)).expect("valid instance")
}

pub fn pick<R: Rng>(rng: &mut R, words: &[String], n: usize) -> Vec<String> {
    (0..n)
        .map(|_| words[rng.random_range(0..words.len())].clone())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
