//! Python bindings: hierarchies, tree counts, the exact oracle and chains.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;

use msms::engine::{
    chain_rng, seed_plan, total_variation as tv_of, Chain, ChainConfig, Histogram, ProposalMix,
    SeedConfig, StepKind,
};
use msms::error::ProposalError;
use msms::io::{read_graph, write_snapshot, GraphFile};
use msms::measure::{LinkScheme, MeasureParams};
use msms::oracle::{exact_law as oracle_law, OracleLimits};
use msms::proposal::{BlockBounds, HierarchyOutcome, Outcome};
use msms::tree::{count_hierarchical_trees, count_spanning_trees as tau_of, TreeCount};
use msms::{BaseGraph, Hierarchy, MaskRegion, Multigraph};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn invalid(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn failed(e: impl Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Exact counts become Python ints; log-only counts are an error.
fn to_int<'py>(py: Python<'py>, count: &TreeCount) -> PyResult<Bound<'py, PyAny>> {
    let value = count
        .value
        .as_ref()
        .ok_or_else(|| failed("count is only known in the log domain"))?;
    py.import("builtins")?
        .getattr("int")?
        .call1((value.to_string(),))
}

/// A base graph with nested coarse levels.
#[pyclass(name = "Hierarchy", module = "pymsms", frozen)]
pub struct PyHierarchy {
    inner: Hierarchy,
}

#[pymethods]
impl PyHierarchy {
    /// `levels[k]` maps every node of level k to its level k+1 parent.
    #[new]
    #[pyo3(signature = (population, edges, levels = Vec::new()))]
    fn new(
        population: Vec<u64>,
        edges: Vec<(usize, usize)>,
        levels: Vec<Vec<usize>>,
    ) -> PyResult<Self> {
        let base = BaseGraph::new(population, edges).map_err(invalid)?;
        let inner = Hierarchy::build(base, &levels).map_err(invalid)?;
        Ok(PyHierarchy { inner })
    }

    /// Reads a JSON graph file as written by the command-line tool.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let file: GraphFile = read_graph(&path).map_err(invalid)?;
        Ok(PyHierarchy {
            inner: file.to_hierarchy().map_err(invalid)?,
        })
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.size(0)
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.base().num_edges()
    }

    /// Number of coarse levels above the base graph.
    #[getter]
    fn levels(&self) -> usize {
        self.inner.levels()
    }

    fn size(&self, level: usize) -> PyResult<usize> {
        if level > self.inner.levels() {
            return Err(invalid(format!("no level {level}")));
        }
        Ok(self.inner.size(level))
    }

    fn with_attribute(&self, name: &str, values: Vec<f64>) -> PyResult<Self> {
        let base = self
            .inner
            .base()
            .clone()
            .with_attribute(name, values)
            .map_err(invalid)?;
        let inner = Hierarchy::build(base, self.inner.partition_maps()).map_err(invalid)?;
        Ok(PyHierarchy { inner })
    }

    /// Hierarchical tree count of the subgraph on `vertices` (all by default).
    #[pyo3(signature = (vertices = None))]
    fn count_trees<'py>(
        &self,
        py: Python<'py>,
        vertices: Option<Vec<usize>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let h = &self.inner;
        let region = match vertices {
            Some(v) => {
                if let Some(&bad) = v.iter().find(|&&x| x >= h.size(0)) {
                    return Err(invalid(format!("no vertex {bad}")));
                }
                MaskRegion::from_vertices(h, v)
            }
            None => MaskRegion::whole(h),
        };
        to_int(py, &count_hierarchical_trees(h, &region).map_err(failed)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "Hierarchy(vertices={}, edges={}, levels={})",
            self.inner.size(0),
            self.inner.base().num_edges(),
            self.inner.levels()
        )
    }
}

/// Parameters of the target measure.
#[pyclass(name = "Params", module = "pymsms", frozen)]
pub struct PyParams {
    inner: MeasureParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (
        num_districts = 2,
        pop_tol = 0.0,
        gamma = 0.0,
        beta = 0.0,
        max_split_top_nodes = None,
        max_districts_per_top_node = 2,
        link_scheme = "per-adjacent-pair",
        allow_spanning_links = false,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        num_districts: usize,
        pop_tol: f64,
        gamma: f64,
        beta: f64,
        max_split_top_nodes: Option<usize>,
        max_districts_per_top_node: usize,
        link_scheme: &str,
        allow_spanning_links: bool,
    ) -> PyResult<Self> {
        let link_scheme = match link_scheme {
            "per-adjacent-pair" => LinkScheme::PerAdjacentPair,
            "fixed-count-strict" => LinkScheme::FixedCountStrict,
            other => return Err(invalid(format!("unknown link scheme {other:?}"))),
        };
        let inner = MeasureParams {
            num_districts,
            pop_tol,
            gamma,
            beta,
            max_split_top_nodes,
            max_districts_per_top_node,
            link_scheme,
            allow_spanning_links,
            ..MeasureParams::default()
        };
        inner.validate().map_err(invalid)?;
        Ok(PyParams { inner })
    }

    /// The thirteen-district county configuration.
    #[staticmethod]
    fn county() -> Self {
        PyParams {
            inner: MeasureParams::county_preset(),
        }
    }

    #[getter]
    fn num_districts(&self) -> usize {
        self.inner.num_districts
    }

    #[getter]
    fn pop_tol(&self) -> f64 {
        self.inner.pop_tol
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    fn __repr__(&self) -> String {
        format!("Params({:?})", self.inner)
    }
}

/// One merge-split (or hierarchy) chain started from a seeded plan.
#[pyclass(name = "Chain", module = "pymsms")]
pub struct PyChain {
    inner: Chain,
}

#[pymethods]
impl PyChain {
    #[new]
    #[pyo3(signature = (
        hierarchy,
        params,
        seed = 0,
        stream = 0,
        observables = Vec::new(),
        hierarchy_weight = 0.0,
        block_bounds = None,
    ))]
    fn new(
        hierarchy: &PyHierarchy,
        params: &PyParams,
        seed: u64,
        stream: u64,
        observables: Vec<String>,
        hierarchy_weight: f64,
        block_bounds: Option<(usize, usize)>,
    ) -> PyResult<Self> {
        let h = hierarchy.inner.clone();
        let params = params.inner.clone();
        let mut rng = chain_rng(seed, (1 << 32) + stream);
        let state = seed_plan(&h, &params, &SeedConfig::default(), &mut rng).map_err(failed)?;
        let block_bounds = block_bounds
            .map(|(lo, hi)| BlockBounds::new(lo, hi))
            .transpose()
            .map_err(invalid)?;
        let config = ChainConfig {
            rng_seed: seed,
            stream,
            observables,
            mix: ProposalMix {
                merge_split: 1.0,
                hierarchy: hierarchy_weight,
            },
            block_bounds,
            ..ChainConfig::default()
        };
        let inner = Chain::new(h, state, params, config).map_err(invalid)?;
        Ok(PyChain { inner })
    }

    /// Runs one proposal and names its outcome: "accepted", "rejected" or
    /// "aborted".
    fn step(&mut self) -> PyResult<&'static str> {
        Ok(match self.inner.step().map_err(failed)? {
            StepKind::MergeSplit(record) => match record.outcome {
                Outcome::Accepted => "accepted",
                Outcome::Rejected => "rejected",
                Outcome::Aborted(_) => "aborted",
            },
            StepKind::Hierarchy(outcome) => match outcome {
                HierarchyOutcome::Accepted => "accepted",
                HierarchyOutcome::Rejected => "rejected",
                HierarchyOutcome::Aborted(_) => "aborted",
            },
        })
    }

    /// Runs `steps` proposals with the interpreter released.
    fn run(&mut self, py: Python<'_>, steps: u64) -> PyResult<()> {
        let chain = &mut self.inner;
        py.detach(|| {
            for _ in 0..steps {
                chain.step()?;
            }
            Ok::<_, ProposalError>(())
        })
        .map_err(failed)
    }

    /// District of every base vertex.
    fn assignment(&self) -> Vec<usize> {
        self.inner.state.partition.assignment().to_vec()
    }

    fn district_populations(&self) -> Vec<u64> {
        self.inner.state.partition.district_pops().to_vec()
    }

    /// Per-district sums of each observable, in the order given.
    fn observable_sums(&self) -> Vec<Vec<f64>> {
        self.inner.record(false).sums
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.inner.stats;
        let d = PyDict::new(py);
        d.set_item("proposals", s.proposals)?;
        d.set_item("accepted", s.accepted)?;
        d.set_item("rejected", s.rejected)?;
        d.set_item("aborted", s.aborted)?;
        d.set_item("hierarchy_proposals", s.hierarchy_proposals)?;
        d.set_item("hierarchy_accepted", s.hierarchy_accepted)?;
        Ok(d)
    }

    fn save_snapshot(&self, path: PathBuf) -> PyResult<()> {
        let h = self
            .inner
            .config
            .mix
            .hierarchy
            .gt(&0.0)
            .then_some(&self.inner.hierarchy);
        write_snapshot(&path, &self.inner.state, h).map_err(failed)
    }
}

/// Spanning-tree count of a multigraph on `0..n`; parallel edges count
/// separately.
#[pyfunction]
fn count_spanning_trees<'py>(
    py: Python<'py>,
    n: usize,
    edges: Vec<(usize, usize)>,
) -> PyResult<Bound<'py, PyAny>> {
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
        return Err(invalid(format!("edge ({a}, {b}) leaves 0..{n}")));
    }
    let g = Multigraph::new(
        (0..n).collect(),
        edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| (a, b, i))
            .collect(),
    );
    to_int(py, &tau_of(&g).map_err(failed)?)
}

/// Every feasible partition with its probability under the target measure.
#[pyfunction]
fn exact_law(hierarchy: &PyHierarchy, params: &PyParams) -> PyResult<Vec<(Vec<usize>, f64)>> {
    let law =
        oracle_law(&hierarchy.inner, &params.inner, OracleLimits::default()).map_err(failed)?;
    Ok(law.probabilities().into_iter().collect())
}

/// A seeded plan's district assignment.
#[pyfunction]
#[pyo3(signature = (hierarchy, params, seed = 0))]
fn seed_assignment(hierarchy: &PyHierarchy, params: &PyParams, seed: u64) -> PyResult<Vec<usize>> {
    let state = seed_plan(
        &hierarchy.inner,
        &params.inner,
        &SeedConfig::default(),
        &mut chain_rng(seed, 1 << 32),
    )
    .map_err(failed)?;
    Ok(state.partition.assignment().to_vec())
}

/// Half the L1 distance between two count histograms.
#[pyfunction]
fn total_variation(p: BTreeMap<i64, u64>, q: BTreeMap<i64, u64>) -> f64 {
    let (p, q): (Histogram, Histogram) = (p, q);
    tv_of(&p, &q)
}

#[pymodule]
fn pymsms(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHierarchy>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyChain>()?;
    m.add_function(wrap_pyfunction!(count_spanning_trees, m)?)?;
    m.add_function(wrap_pyfunction!(exact_law, m)?)?;
    m.add_function(wrap_pyfunction!(seed_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(total_variation, m)?)?;
    Ok(())
}
