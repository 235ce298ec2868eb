//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! Each node holds a value; gradients are accumulated by walking the
//! recording backwards from a scalar root. Constants are leaves whose
//! gradients are simply never read.

use ndarray::{Array2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a + b` with `b` a single row broadcast over `a`'s rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Tanh(Var),
    Scale(Var, f64),
    /// Element-wise product with a constant array.
    MulConst(Var, Array2<f64>),
    /// Unit-normalizes the 4 columns starting at each offset.
    NormalizeQuat(Var, Vec<usize>),
    /// L2 norm of each consecutive run of `block` columns.
    BlockNorms(Var, usize),
    Square(Var),
    /// Mean of all entries, as a `1×1` array.
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for nodes the root does not reach.
#[derive(Debug)]
pub struct Gradients(Vec<Option<Array2<f64>>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.0[v.0].take()
    }
}

/// Unit-normalizes, in place, the 4 columns at each offset of every row.
/// All-zero blocks are left as they are.
pub fn normalize_quat_rows(x: &mut Array2<f64>, offsets: &[usize]) {
    for mut row in x.rows_mut() {
        for &o in offsets {
            let n = (0..4).map(|k| row[o + k] * row[o + k]).sum::<f64>().sqrt();
            if n > 0.0 {
                for k in 0..4 {
                    row[o + k] /= n;
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let value = self.value(a) * &c;
        self.push(value, Op::MulConst(a, c))
    }

    pub fn normalize_quat(&mut self, a: Var, offsets: Vec<usize>) -> Var {
        let mut value = self.value(a).clone();
        normalize_quat_rows(&mut value, &offsets);
        self.push(value, Op::NormalizeQuat(a, offsets))
    }

    pub fn block_norms(&mut self, a: Var, block: usize) -> Var {
        let x = self.value(a);
        let cols = x.ncols() / block;
        let value = Array2::from_shape_fn((x.nrows(), cols), |(r, c)| {
            (0..block).map(|k| x[[r, c * block + k]].powi(2)).sum::<f64>().sqrt()
        });
        self.push(value, Op::BlockNorms(a, block))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v * v);
        self.push(value, Op::Square(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Array2::from_elem((1, 1), x.sum() / x.len() as f64);
        self.push(value, Op::Mean(a))
    }

    /// Gradients of the `1×1` node `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones(self.value(root).raw_dim()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[row.0], gr);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[b.0], -&g);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Tanh(a) => {
                    let ga = &g * &node.value.mapv(|y| 1.0 - y * y);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Scale(a, c) => accumulate(&mut grads[a.0], g * *c),
                Op::MulConst(a, c) => accumulate(&mut grads[a.0], g * c),
                Op::NormalizeQuat(a, offsets) => {
                    let x = self.value(*a);
                    let mut ga = g.clone();
                    for r in 0..x.nrows() {
                        for &o in offsets {
                            let n = (0..4).map(|k| x[[r, o + k]].powi(2)).sum::<f64>().sqrt();
                            if n == 0.0 {
                                continue;
                            }
                            let y: Vec<f64> = (0..4).map(|k| node.value[[r, o + k]]).collect();
                            let dot: f64 = (0..4).map(|k| y[k] * g[[r, o + k]]).sum();
                            for k in 0..4 {
                                ga[[r, o + k]] = (g[[r, o + k]] - y[k] * dot) / n;
                            }
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::BlockNorms(a, block) => {
                    let x = self.value(*a);
                    let ga = Array2::from_shape_fn(x.raw_dim(), |(r, c)| {
                        let n = node.value[[r, c / block]];
                        if n > 0.0 {
                            g[[r, c / block]] * x[[r, c]] / n
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Square(a) => {
                    let ga = &g * &self.value(*a).mapv(|v| 2.0 * v);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let ga = Array2::from_elem(x.raw_dim(), g[[0, 0]] / x.len() as f64);
                    accumulate(&mut grads[a.0], ga);
                }
            }
        }
        Gradients(grads)
    }
}
