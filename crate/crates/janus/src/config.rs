//! Problem-description files: a flat block/key-value text format.
//!
//! The format is line-oriented. A file holds one `model` line plus named
//! blocks `name { ... }` of `key value...` lines; `#` starts a comment.
//! Parsing is *not* fail-fast: every syntax and validation problem in the
//! file is reported with its line and column, so a user fixes a config in
//! one round. `emit` renders a canonical form; parse . emit is the
//! identity on configs and emit . parse is idempotent on text.
//!
//! This parser is the only part of the library that consumes untrusted
//! bytes, so it must never panic on any input (the fuzz targets hold it to
//! that).

use crate::domain::{BoxRegion, GridSpec, MAX_DIM};
use crate::kernels::{CouplingSpec, KernelFamily, KernelSpec};
use std::fmt;

/// One problem found while reading a config; `line`/`col` are 1-based,
/// with (0, 0) meaning the file as a whole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "line {}, col {}: {}", self.line, self.col, self.message)
        }
    }
}

/// Model selector: which energy blocks are assembled and how the coupling
/// acts (across volumes or through the interface).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    Volumetric,
    Mixed,
    FractionalVolumetric,
    FractionalMixed,
}

impl ModelTag {
    pub fn name(self) -> &'static str {
        match self {
            ModelTag::Volumetric => "volumetric",
            ModelTag::Mixed => "mixed",
            ModelTag::FractionalVolumetric => "fractional-volumetric",
            ModelTag::FractionalMixed => "fractional-mixed",
        }
    }

    pub fn is_mixed(self) -> bool {
        matches!(self, ModelTag::Mixed | ModelTag::FractionalMixed)
    }

    pub fn is_fractional(self) -> bool {
        matches!(
            self,
            ModelTag::FractionalVolumetric | ModelTag::FractionalMixed
        )
    }
}

/// Source term: a named balanced profile or explicit piecewise-constant
/// values (first matching box wins, unmatched cells get zero).
#[derive(Debug, Clone, PartialEq)]
pub enum SourceConfig {
    /// +amplitude on the local region, scaled negative on the nonlocal
    /// region so the weighted sum vanishes exactly.
    BalancedStep {
        amplitude: f64,
    },
    Boxes(Vec<(BoxRegion, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    /// 0 means the solver picks its own cap.
    pub max_iter: usize,
    pub preconditioner: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 0,
            preconditioner: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub particles: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            particles: 1000,
            horizon: 100.0,
            seed: 42,
        }
    }
}

/// Overrides for the constant-tracking chain: the visible local subset A
/// and the tree root hint. Empty means the builder picks them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CouplingConfig {
    pub a_boxes: Vec<BoxRegion>,
    pub root: Option<usize>,
}

/// Fully parsed and validated problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub model: ModelTag,
    pub dim: usize,
    pub h: f64,
    /// One [lo, hi] pair per axis.
    pub bounds: Vec<[f64; 2]>,
    pub local_boxes: Vec<BoxRegion>,
    pub nonlocal_boxes: Vec<BoxRegion>,
    /// Face selector for mixed models; empty otherwise.
    pub gamma_boxes: Vec<BoxRegion>,
    pub kernel_j: KernelSpec,
    pub kernel_g: KernelSpec,
    /// Piecewise-constant asymmetry factors for the coupling kernel.
    pub g_multiplier: Vec<(BoxRegion, f64)>,
    pub source: SourceConfig,
    pub solver: SolverConfig,
    pub simulate: SimulateConfig,
    pub coupling: CouplingConfig,
}

impl ProblemConfig {
    pub fn coupling_spec(&self) -> CouplingSpec {
        CouplingSpec {
            kernel: self.kernel_g,
            multiplier: self.g_multiplier.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Raw stage: lines -> blocks of key/value token lists.

struct RawKey {
    key: String,
    values: Vec<String>,
    line: usize,
    /// Column of the first value token (or of the key if none).
    col: usize,
}

struct RawBlock {
    name: String,
    line: usize,
    keys: Vec<RawKey>,
}

struct RawConfig {
    model: Option<(String, usize, usize)>,
    blocks: Vec<RawBlock>,
}

/// Split one line into (token, 1-based byte column) pairs, dropping
/// everything after a `#`.
fn tokenize(line: &str) -> Vec<(&str, usize)> {
    let body = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut rest = body;
    let mut offset = 0;
    loop {
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        if trimmed.is_empty() {
            break;
        }
        let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
        out.push((&trimmed[..end], offset + 1));
        rest = &trimmed[end..];
        offset += end;
    }
    out
}

fn parse_raw(text: &str, issues: &mut Vec<ConfigIssue>) -> RawConfig {
    let mut raw = RawConfig {
        model: None,
        blocks: Vec::new(),
    };
    let mut open: Option<RawBlock> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let tokens = tokenize(line);
        if tokens.is_empty() {
            continue;
        }
        let (first, first_col) = tokens[0];
        match &mut open {
            None => {
                if first == "}" {
                    issues.push(ConfigIssue {
                        line: lineno,
                        col: first_col,
                        message: "unmatched `}`".into(),
                    });
                } else if tokens.len() == 2 && tokens[1].0 == "{" {
                    if raw.blocks.iter().any(|b| b.name == first) {
                        issues.push(ConfigIssue {
                            line: lineno,
                            col: first_col,
                            message: format!("duplicate block `{first}`"),
                        });
                    }
                    open = Some(RawBlock {
                        name: first.to_string(),
                        line: lineno,
                        keys: Vec::new(),
                    });
                } else if first == "model" {
                    if tokens.len() != 2 {
                        issues.push(ConfigIssue {
                            line: lineno,
                            col: first_col,
                            message: "`model` takes exactly one value".into(),
                        });
                    } else if raw.model.is_some() {
                        issues.push(ConfigIssue {
                            line: lineno,
                            col: first_col,
                            message: "duplicate `model` line".into(),
                        });
                    } else {
                        raw.model = Some((tokens[1].0.to_string(), lineno, tokens[1].1));
                    }
                } else {
                    issues.push(ConfigIssue {
                        line: lineno,
                        col: first_col,
                        message: format!("expected `model <tag>` or `<block> {{`, found `{first}`"),
                    });
                }
            }
            Some(block) => {
                if first == "}" {
                    if tokens.len() > 1 {
                        issues.push(ConfigIssue {
                            line: lineno,
                            col: tokens[1].1,
                            message: "trailing tokens after `}`".into(),
                        });
                    }
                    raw.blocks.push(open.take().unwrap());
                } else if tokens.len() >= 2 && tokens[1].0 == "{" {
                    issues.push(ConfigIssue {
                        line: lineno,
                        col: first_col,
                        message: format!("block `{first}` opened inside `{}`", block.name),
                    });
                } else {
                    let col = tokens.get(1).map(|&(_, c)| c).unwrap_or(first_col);
                    block.keys.push(RawKey {
                        key: first.to_string(),
                        values: tokens[1..].iter().map(|&(t, _)| t.to_string()).collect(),
                        line: lineno,
                        col,
                    });
                }
            }
        }
    }
    if let Some(block) = open {
        issues.push(ConfigIssue {
            line: block.line,
            col: 1,
            message: format!("block `{}` is never closed", block.name),
        });
        raw.blocks.push(block);
    }
    raw
}

// ---------------------------------------------------------------------------
// Typed stage: interpret blocks, collecting every problem.

struct Reader<'a> {
    issues: &'a mut Vec<ConfigIssue>,
}

impl Reader<'_> {
    fn push(&mut self, line: usize, col: usize, message: String) {
        self.issues.push(ConfigIssue { line, col, message });
    }

    fn f64(&mut self, k: &RawKey, pos: usize) -> Option<f64> {
        let tok = &k.values[pos];
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.push(k.line, k.col, format!("`{tok}` is not a finite number"));
                None
            }
        }
    }

    fn usize(&mut self, k: &RawKey, pos: usize) -> Option<usize> {
        let tok = &k.values[pos];
        match tok.parse::<usize>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.push(
                    k.line,
                    k.col,
                    format!("`{tok}` is not a non-negative integer"),
                );
                None
            }
        }
    }

    fn arity(&mut self, k: &RawKey, want: usize) -> bool {
        if k.values.len() == want {
            true
        } else {
            self.push(
                k.line,
                k.col,
                format!(
                    "`{}` takes {want} value(s), found {}",
                    k.key,
                    k.values.len()
                ),
            );
            false
        }
    }

    /// Read `2*dim` floats starting at `pos` as a box. Degenerate axes
    /// (lo == hi) are allowed only for face selectors.
    fn boxes_from(
        &mut self,
        k: &RawKey,
        pos: usize,
        dim: usize,
        allow_degenerate: bool,
    ) -> Option<BoxRegion> {
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for axis in 0..dim {
            lo[axis] = self.f64(k, pos + 2 * axis)?;
            hi[axis] = self.f64(k, pos + 2 * axis + 1)?;
            let bad = if allow_degenerate {
                lo[axis] > hi[axis]
            } else {
                lo[axis] >= hi[axis]
            };
            if bad {
                self.push(
                    k.line,
                    k.col,
                    format!(
                        "box axis {axis}: lo {} must be below hi {}",
                        lo[axis], hi[axis]
                    ),
                );
                return None;
            }
        }
        Some(BoxRegion { lo, hi })
    }
}

fn find_block<'a>(raw: &'a RawConfig, name: &str) -> Option<&'a RawBlock> {
    raw.blocks.iter().find(|b| b.name == name)
}

fn read_box_list(
    r: &mut Reader,
    block: &RawBlock,
    dim: usize,
    allow_degenerate: bool,
) -> Vec<BoxRegion> {
    let mut out = Vec::new();
    for k in &block.keys {
        if k.key != "box" {
            r.push(
                k.line,
                k.col,
                format!("unknown key `{}` (expected `box`)", k.key),
            );
            continue;
        }
        if !r.arity(k, 2 * dim) {
            continue;
        }
        if let Some(b) = r.boxes_from(k, 0, dim, allow_degenerate) {
            out.push(b);
        }
    }
    if out.is_empty() {
        r.push(
            block.line,
            1,
            format!("block `{}` defines no boxes", block.name),
        );
    }
    out
}

fn read_kernel(
    r: &mut Reader,
    block: &RawBlock,
    dim: usize,
    allow_multiplier: bool,
) -> (KernelSpec, Vec<(BoxRegion, f64)>) {
    let mut family: Option<(String, usize, usize)> = None;
    let mut c = None;
    let mut delta = None;
    let mut s: Option<(f64, usize, usize)> = None;
    let mut epsilon = None;
    let mut multiplier = Vec::new();
    for k in &block.keys {
        match k.key.as_str() {
            "family" => {
                if r.arity(k, 1) {
                    family = Some((k.values[0].clone(), k.line, k.col));
                }
            }
            "c" => {
                if r.arity(k, 1) {
                    c = r.f64(k, 0);
                }
            }
            "delta" => {
                if r.arity(k, 1) {
                    delta = r.f64(k, 0);
                }
            }
            "s" => {
                if r.arity(k, 1) {
                    s = r.f64(k, 0).map(|v| (v, k.line, k.col));
                }
            }
            "epsilon" => {
                if r.arity(k, 1) {
                    epsilon = r.f64(k, 0);
                }
            }
            "multiplier" => {
                if !allow_multiplier {
                    r.push(
                        k.line,
                        k.col,
                        "`multiplier` only applies to the coupling kernel `kernel_g`".into(),
                    );
                } else if r.arity(k, 2 * dim + 1) {
                    if let (Some(b), Some(a)) = (r.boxes_from(k, 0, dim, false), r.f64(k, 2 * dim))
                    {
                        if a < 0.0 {
                            r.push(k.line, k.col, "multiplier factor must be >= 0".into());
                        } else {
                            multiplier.push((b, a));
                        }
                    }
                }
            }
            other => r.push(k.line, k.col, format!("unknown kernel key `{other}`")),
        }
    }

    let c = c.unwrap_or_else(|| {
        r.push(
            block.line,
            1,
            format!("block `{}` is missing `c`", block.name),
        );
        1.0
    });
    if c < 0.0 {
        r.push(block.line, 1, "kernel amplitude `c` must be >= 0".into());
    }
    let delta = delta.unwrap_or_else(|| {
        r.push(
            block.line,
            1,
            format!("block `{}` is missing `delta`", block.name),
        );
        1.0
    });
    if delta <= 0.0 {
        r.push(block.line, 1, "kernel `delta` must be positive".into());
    }

    let spec = match family {
        Some((name, line, col)) => match name.as_str() {
            "indicator" => KernelSpec::indicator(c, delta),
            "truncated-gaussian" => KernelSpec::truncated_gaussian(c, delta),
            "fractional" => {
                let s_val = match s {
                    Some((v, sl, sc)) => {
                        if v <= 0.0 || v >= 1.0 {
                            r.push(sl, sc, "s must be in (0,1)".into());
                        }
                        v
                    }
                    None => {
                        r.push(line, col, "fractional kernel is missing `s`".into());
                        0.5
                    }
                };
                KernelSpec::fractional(c, delta, s_val, epsilon.unwrap_or(0.0))
            }
            other => {
                r.push(line, col, format!("unknown kernel family `{other}`"));
                KernelSpec::indicator(c, delta)
            }
        },
        None => {
            r.push(
                block.line,
                1,
                format!("block `{}` is missing `family`", block.name),
            );
            KernelSpec::indicator(c, delta)
        }
    };
    if !matches!(spec.family, KernelFamily::Fractional { .. }) {
        if let Some((_, sl, sc)) = s {
            r.push(sl, sc, "`s` only applies to the fractional family".into());
        }
    }
    (spec, multiplier)
}

/// Parse and validate a whole config. `Ok` exactly when the text has no
/// syntax or validation problems; otherwise every problem found.
pub fn parse_config(text: &str) -> std::result::Result<ProblemConfig, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let raw = parse_raw(text, &mut issues);
    let r = &mut Reader {
        issues: &mut issues,
    };

    let model = match &raw.model {
        Some((tag, line, col)) => match tag.as_str() {
            "volumetric" => ModelTag::Volumetric,
            "mixed" => ModelTag::Mixed,
            "fractional-volumetric" => ModelTag::FractionalVolumetric,
            "fractional-mixed" => ModelTag::FractionalMixed,
            other => {
                r.push(*line, *col, format!("unknown model `{other}`"));
                ModelTag::Volumetric
            }
        },
        None => {
            r.push(0, 0, "missing `model` line".into());
            ModelTag::Volumetric
        }
    };

    const KNOWN: [&str; 10] = [
        "grid", "local", "nonlocal", "gamma", "kernel_j", "kernel_g", "source", "solver",
        "simulate", "coupling",
    ];
    for b in &raw.blocks {
        if !KNOWN.contains(&b.name.as_str()) {
            r.push(b.line, 1, format!("unknown block `{}`", b.name));
        }
    }

    // Grid.
    let mut dim = 1;
    let mut h = 1.0;
    let mut bounds: Vec<[f64; 2]> = vec![[0.0, 1.0]];
    match find_block(&raw, "grid") {
        Some(block) => {
            let mut got_dim = None;
            let mut got_h = None;
            let mut got_bounds: Option<&RawKey> = None;
            for k in &block.keys {
                match k.key.as_str() {
                    "dim" => {
                        if r.arity(k, 1) {
                            got_dim = r.usize(k, 0).map(|d| (d, k.line, k.col));
                        }
                    }
                    "h" => {
                        if r.arity(k, 1) {
                            got_h = r.f64(k, 0);
                        }
                    }
                    "bounds" => got_bounds = Some(k),
                    other => r.push(k.line, k.col, format!("unknown grid key `{other}`")),
                }
            }
            match got_dim {
                Some((d, line, col)) => {
                    if d == 0 || d > MAX_DIM {
                        r.push(line, col, format!("dim must be 1..={MAX_DIM}"));
                    } else {
                        dim = d;
                    }
                }
                None => r.push(block.line, 1, "grid is missing `dim`".into()),
            }
            match got_h {
                Some(v) if v > 0.0 => h = v,
                Some(_) => r.push(block.line, 1, "grid `h` must be positive".into()),
                None => r.push(block.line, 1, "grid is missing `h`".into()),
            }
            match got_bounds {
                Some(k) => {
                    if r.arity(k, 2 * dim) {
                        let mut ok = true;
                        let mut bs = Vec::new();
                        for axis in 0..dim {
                            let lo = r.f64(k, 2 * axis);
                            let hi = r.f64(k, 2 * axis + 1);
                            if let (Some(lo), Some(hi)) = (lo, hi) {
                                if lo >= hi {
                                    r.push(
                                        k.line,
                                        k.col,
                                        format!("bounds axis {axis}: {lo} must be below {hi}"),
                                    );
                                    ok = false;
                                } else {
                                    bs.push([lo, hi]);
                                }
                            } else {
                                ok = false;
                            }
                        }
                        if ok {
                            bounds = bs;
                            if let Err(e) = GridSpec::new(dim, h, &bounds) {
                                r.push(k.line, k.col, format!("grid rejected: {e}"));
                            }
                        }
                    }
                }
                None => r.push(block.line, 1, "grid is missing `bounds`".into()),
            }
        }
        None => r.push(0, 0, "missing required block `grid`".into()),
    }

    let mut region = |name: &str, required: bool, degenerate: bool| -> Vec<BoxRegion> {
        match find_block(&raw, name) {
            Some(block) => read_box_list(r, block, dim, degenerate),
            None => {
                if required {
                    r.push(0, 0, format!("missing required block `{name}`"));
                }
                Vec::new()
            }
        }
    };
    let local_boxes = region("local", true, false);
    let nonlocal_boxes = region("nonlocal", true, false);
    let gamma_boxes = region("gamma", false, true);

    if model.is_mixed() && gamma_boxes.is_empty() {
        r.push(
            0,
            0,
            format!("model {} requires a `gamma` block", model.name()),
        );
    }
    if !model.is_mixed() {
        if let Some(block) = find_block(&raw, "gamma") {
            r.push(
                block.line,
                1,
                format!(
                    "`gamma` block is only valid for mixed models, not {}",
                    model.name()
                ),
            );
        }
    }

    // Kernels.
    let (kernel_j, _) = match find_block(&raw, "kernel_j") {
        Some(b) => read_kernel(r, b, dim, false),
        None => {
            r.push(0, 0, "missing required block `kernel_j`".into());
            (KernelSpec::indicator(1.0, 1.0), Vec::new())
        }
    };
    let (kernel_g, g_multiplier) = match find_block(&raw, "kernel_g") {
        Some(b) => read_kernel(r, b, dim, true),
        None => {
            r.push(0, 0, "missing required block `kernel_g`".into());
            (KernelSpec::indicator(1.0, 1.0), Vec::new())
        }
    };

    if model.is_fractional() {
        if !matches!(kernel_j.family, KernelFamily::Fractional { .. }) {
            r.push(
                0,
                0,
                format!(
                    "model {} requires kernel_j family `fractional`",
                    model.name()
                ),
            );
        }
    } else if matches!(kernel_j.family, KernelFamily::Fractional { .. }) {
        r.push(
            0,
            0,
            format!("model {} requires a non-fractional kernel_j", model.name()),
        );
    }
    if matches!(kernel_g.family, KernelFamily::Fractional { .. }) {
        r.push(0, 0, "coupling kernel_g must not be fractional".into());
    }

    // Source.
    let source = match find_block(&raw, "source") {
        Some(block) => {
            let mut profile: Option<(String, usize, usize)> = None;
            let mut amplitude = None;
            let mut boxes = Vec::new();
            for k in &block.keys {
                match k.key.as_str() {
                    "profile" => {
                        if r.arity(k, 1) {
                            profile = Some((k.values[0].clone(), k.line, k.col));
                        }
                    }
                    "amplitude" => {
                        if r.arity(k, 1) {
                            amplitude = r.f64(k, 0);
                        }
                    }
                    "box" => {
                        // box <2*dim floats> value <float>
                        if k.values.len() != 2 * dim + 2 || k.values[2 * dim] != "value" {
                            r.push(
                                k.line,
                                k.col,
                                format!(
                                    "source `box` takes {} bounds, `value`, and a number",
                                    2 * dim
                                ),
                            );
                            continue;
                        }
                        if let (Some(b), Some(v)) =
                            (r.boxes_from(k, 0, dim, false), r.f64(k, 2 * dim + 1))
                        {
                            boxes.push((b, v));
                        }
                    }
                    other => r.push(k.line, k.col, format!("unknown source key `{other}`")),
                }
            }
            match (profile, boxes.is_empty()) {
                (Some((name, line, col)), true) => {
                    if name != "balanced-step" {
                        r.push(line, col, format!("unknown source profile `{name}`"));
                    }
                    SourceConfig::BalancedStep {
                        amplitude: amplitude.unwrap_or(1.0),
                    }
                }
                (Some((_, line, col)), false) => {
                    r.push(line, col, "source has both a profile and boxes".into());
                    SourceConfig::BalancedStep { amplitude: 1.0 }
                }
                (None, false) => {
                    if amplitude.is_some() {
                        r.push(
                            block.line,
                            1,
                            "`amplitude` only applies to a source profile".into(),
                        );
                    }
                    SourceConfig::Boxes(boxes)
                }
                (None, true) => {
                    r.push(
                        block.line,
                        1,
                        "source defines neither profile nor boxes".into(),
                    );
                    SourceConfig::BalancedStep { amplitude: 1.0 }
                }
            }
        }
        None => {
            r.push(0, 0, "missing required block `source`".into());
            SourceConfig::BalancedStep { amplitude: 1.0 }
        }
    };

    // Solver.
    let mut solver = SolverConfig::default();
    if let Some(block) = find_block(&raw, "solver") {
        for k in &block.keys {
            match k.key.as_str() {
                "tol" => {
                    if r.arity(k, 1) {
                        if let Some(v) = r.f64(k, 0) {
                            if v > 0.0 {
                                solver.tol = v;
                            } else {
                                r.push(k.line, k.col, "tol must be positive".into());
                            }
                        }
                    }
                }
                "max_iter" => {
                    if r.arity(k, 1) {
                        if let Some(v) = r.usize(k, 0) {
                            solver.max_iter = v;
                        }
                    }
                }
                "preconditioner" => {
                    if r.arity(k, 1) {
                        match k.values[0].as_str() {
                            "on" => solver.preconditioner = true,
                            "off" => solver.preconditioner = false,
                            other => r.push(
                                k.line,
                                k.col,
                                format!("preconditioner must be `on` or `off`, found `{other}`"),
                            ),
                        }
                    }
                }
                other => r.push(k.line, k.col, format!("unknown solver key `{other}`")),
            }
        }
    }

    // Simulate.
    let mut simulate = SimulateConfig::default();
    if let Some(block) = find_block(&raw, "simulate") {
        for k in &block.keys {
            match k.key.as_str() {
                "particles" => {
                    if r.arity(k, 1) {
                        if let Some(v) = r.usize(k, 0) {
                            if v >= 1 {
                                simulate.particles = v;
                            } else {
                                r.push(k.line, k.col, "particles must be >= 1".into());
                            }
                        }
                    }
                }
                "horizon" => {
                    if r.arity(k, 1) {
                        if let Some(v) = r.f64(k, 0) {
                            if v > 0.0 {
                                simulate.horizon = v;
                            } else {
                                r.push(k.line, k.col, "horizon must be positive".into());
                            }
                        }
                    }
                }
                "seed" => {
                    if r.arity(k, 1) {
                        match k.values[0].parse::<u64>() {
                            Ok(v) => simulate.seed = v,
                            Err(_) => r.push(
                                k.line,
                                k.col,
                                format!("`{}` is not a 64-bit seed", k.values[0]),
                            ),
                        }
                    }
                }
                other => r.push(k.line, k.col, format!("unknown simulate key `{other}`")),
            }
        }
    }

    // Coupling overrides.
    let mut coupling = CouplingConfig::default();
    if let Some(block) = find_block(&raw, "coupling") {
        for k in &block.keys {
            match k.key.as_str() {
                "a_box" => {
                    if r.arity(k, 2 * dim) {
                        if let Some(b) = r.boxes_from(k, 0, dim, false) {
                            coupling.a_boxes.push(b);
                        }
                    }
                }
                "root" => {
                    if r.arity(k, 1) {
                        coupling.root = r.usize(k, 0);
                    }
                }
                other => r.push(k.line, k.col, format!("unknown coupling key `{other}`")),
            }
        }
    }

    // Geometric containment: every referenced box inside the grid bounds.
    {
        let inside = |b: &BoxRegion| -> bool {
            const TOL: f64 = 1e-9;
            (0..dim).all(|ax| b.lo[ax] >= bounds[ax][0] - TOL && b.hi[ax] <= bounds[ax][1] + TOL)
        };
        let mut check = |boxes: &[BoxRegion], what: &str| {
            for b in boxes {
                if !inside(b) {
                    r.push(0, 0, format!("{what} box extends outside the grid bounds"));
                }
            }
        };
        check(&local_boxes, "local");
        check(&nonlocal_boxes, "nonlocal");
        check(&gamma_boxes, "gamma");
        check(&coupling.a_boxes, "coupling a_box");
        let mult_boxes: Vec<BoxRegion> = g_multiplier.iter().map(|&(b, _)| b).collect();
        check(&mult_boxes, "kernel_g multiplier");
        if let SourceConfig::Boxes(list) = &source {
            let src: Vec<BoxRegion> = list.iter().map(|&(b, _)| b).collect();
            check(&src, "source");
        }
    }

    if issues.is_empty() {
        Ok(ProblemConfig {
            model,
            dim,
            h,
            bounds,
            local_boxes,
            nonlocal_boxes,
            gamma_boxes,
            kernel_j,
            kernel_g,
            g_multiplier,
            source,
            solver,
            simulate,
            coupling,
        })
    } else {
        Err(issues)
    }
}

// ---------------------------------------------------------------------------
// Canonical form.

fn push_box(out: &mut String, key: &str, b: &BoxRegion, dim: usize) {
    out.push_str("  ");
    out.push_str(key);
    for ax in 0..dim {
        out.push_str(&format!(" {} {}", b.lo[ax], b.hi[ax]));
    }
    out.push('\n');
}

fn push_kernel(
    out: &mut String,
    name: &str,
    k: &KernelSpec,
    mult: &[(BoxRegion, f64)],
    dim: usize,
) {
    out.push_str(&format!("{name} {{\n"));
    let family = match k.family {
        KernelFamily::Indicator => "indicator",
        KernelFamily::TruncatedGaussian => "truncated-gaussian",
        KernelFamily::Fractional { .. } => "fractional",
    };
    out.push_str(&format!("  family {family}\n"));
    out.push_str(&format!("  c {}\n", k.amplitude));
    out.push_str(&format!("  delta {}\n", k.delta));
    if let KernelFamily::Fractional { s, epsilon } = k.family {
        out.push_str(&format!("  s {s}\n"));
        out.push_str(&format!("  epsilon {epsilon}\n"));
    }
    for (b, a) in mult {
        out.push_str("  multiplier");
        for ax in 0..dim {
            out.push_str(&format!(" {} {}", b.lo[ax], b.hi[ax]));
        }
        out.push_str(&format!(" {a}\n"));
    }
    out.push_str("}\n");
}

/// Render the canonical text form: fixed block order, two-space indent,
/// shortest exact float formatting. `parse_config(emit(c)) == Ok(c)` for
/// every valid config, and `emit` of a parsed file is a fixed point.
pub fn emit(c: &ProblemConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("model {}\n\n", c.model.name()));

    out.push_str("grid {\n");
    out.push_str(&format!("  dim {}\n", c.dim));
    out.push_str(&format!("  h {}\n", c.h));
    out.push_str("  bounds");
    for ax in 0..c.dim {
        out.push_str(&format!(" {} {}", c.bounds[ax][0], c.bounds[ax][1]));
    }
    out.push_str("\n}\n\n");

    out.push_str("local {\n");
    for b in &c.local_boxes {
        push_box(&mut out, "box", b, c.dim);
    }
    out.push_str("}\n\n");
    out.push_str("nonlocal {\n");
    for b in &c.nonlocal_boxes {
        push_box(&mut out, "box", b, c.dim);
    }
    out.push_str("}\n\n");
    if !c.gamma_boxes.is_empty() {
        out.push_str("gamma {\n");
        for b in &c.gamma_boxes {
            push_box(&mut out, "box", b, c.dim);
        }
        out.push_str("}\n\n");
    }

    push_kernel(&mut out, "kernel_j", &c.kernel_j, &[], c.dim);
    out.push('\n');
    push_kernel(&mut out, "kernel_g", &c.kernel_g, &c.g_multiplier, c.dim);
    out.push('\n');

    out.push_str("source {\n");
    match &c.source {
        SourceConfig::BalancedStep { amplitude } => {
            out.push_str("  profile balanced-step\n");
            out.push_str(&format!("  amplitude {amplitude}\n"));
        }
        SourceConfig::Boxes(list) => {
            for (b, v) in list {
                out.push_str("  box");
                for ax in 0..c.dim {
                    out.push_str(&format!(" {} {}", b.lo[ax], b.hi[ax]));
                }
                out.push_str(&format!(" value {v}\n"));
            }
        }
    }
    out.push_str("}\n\n");

    out.push_str("solver {\n");
    out.push_str(&format!("  tol {}\n", c.solver.tol));
    out.push_str(&format!("  max_iter {}\n", c.solver.max_iter));
    out.push_str(&format!(
        "  preconditioner {}\n",
        if c.solver.preconditioner { "on" } else { "off" }
    ));
    out.push_str("}\n\n");

    out.push_str("simulate {\n");
    out.push_str(&format!("  particles {}\n", c.simulate.particles));
    out.push_str(&format!("  horizon {}\n", c.simulate.horizon));
    out.push_str(&format!("  seed {}\n", c.simulate.seed));
    out.push_str("}\n");

    if !c.coupling.a_boxes.is_empty() || c.coupling.root.is_some() {
        out.push_str("\ncoupling {\n");
        for b in &c.coupling.a_boxes {
            push_box(&mut out, "a_box", b, c.dim);
        }
        if let Some(root) = c.coupling.root {
            out.push_str(&format!("  root {root}\n"));
        }
        out.push_str("}\n");
    }
    out
}
