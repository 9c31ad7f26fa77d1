//! C ABI over the selfportrait numerics: cosine, intra-list similarity, edit
//! classification, the regeneration trigger, ANCOVA and the studentized
//! range distribution.
//!
//! Every fallible call returns an [`SpStatus`]; on failure the message is
//! available from [`sp_last_error`] on the same thread until the next call.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use chrono::{DateTime, Duration, Utc};

use selfportrait::domain::{Embedding, MovieId};
use selfportrait::edits::{self, EditClass, EditError};
use selfportrait::metrics::compute_ils;
use selfportrait::semantic::{cosine_slices, MockEmbedder, SemanticError};
use selfportrait::stats::{self, AncovaResult, Group, StatsError};
use selfportrait::summarize::{should_regenerate, GenerationKind, GenerationRecord, RegenerationPolicy};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    ZeroVector = 4,
    DegenerateGroups = 5,
    Numerical = 6,
    Provider = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpEditClass {
    Retained = 0,
    Reworded = 1,
    Pruned = 2,
}

/// Group codes for [`sp_ancova`]: 0 no edits, 1 one edit, 2 more.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpGroup {
    Reflected = 0,
    Interacted = 1,
    Collaborated = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpPolicy {
    pub fraction_threshold: f64,
    pub absolute_threshold: u64,
    pub cadence_seconds: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpPair {
    pub group_a: SpGroup,
    pub group_b: SpGroup,
    pub mean_difference: f64,
    pub p_adjusted: f64,
}

/// Deterministic offline embedder.
pub struct SpEmbedder(MockEmbedder);

/// Result of [`sp_ancova`].
pub struct SpAncova(AncovaResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SpStatus, String);

type Res<T> = Result<T, Failure>;

fn fail<T>(status: SpStatus, msg: impl Into<String>) -> Res<T> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: Option<String>) {
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = msg.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    });
}

/// Runs `f`, recording the error message and converting panics.
fn guard(f: impl FnOnce() -> Res<()>) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            SpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(_) => {
            set_error(Some("internal panic".into()));
            SpStatus::Panic
        }
    }
}

fn out<'a, T>(p: *mut T, name: &str) -> Res<&'a mut T> {
    // SAFETY: the caller passes either null or a valid, writable pointer.
    unsafe { p.as_mut() }.map_or_else(|| fail(SpStatus::NullPointer, format!("{name} is null")), Ok)
}

fn input<'a, T>(p: *const T, len: usize, name: &str) -> Res<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(SpStatus::NullPointer, format!("{name} is null"));
    }
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { slice::from_raw_parts(p, len) })
}

fn text<'a>(p: *const c_char, name: &str) -> Res<&'a str> {
    if p.is_null() {
        return fail(SpStatus::NullPointer, format!("{name} is null"));
    }
    // SAFETY: the caller passes a nul-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .or_else(|_| fail(SpStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn semantic(e: SemanticError) -> Failure {
    let status = match e {
        SemanticError::DimensionMismatch(..) => SpStatus::DimensionMismatch,
        SemanticError::ZeroVector => SpStatus::ZeroVector,
        SemanticError::Provider(_) => SpStatus::Provider,
        SemanticError::EmptyInput => SpStatus::InvalidArgument,
    };
    Failure(status, e.to_string())
}

fn stats_err(e: StatsError) -> Failure {
    let status = match e {
        StatsError::DegenerateGroup => SpStatus::DegenerateGroups,
        StatsError::DimensionMismatch => SpStatus::DimensionMismatch,
        StatsError::NonFinite => SpStatus::InvalidArgument,
        StatsError::RankDeficient | StatsError::NonPositiveMse => SpStatus::Numerical,
    };
    Failure(status, e.to_string())
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library; valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn sp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Cosine similarity of two `dim`-vectors.
///
/// # Safety
/// `a` and `b` point to `dim` doubles; `out_value` is writable.
#[no_mangle]
pub unsafe extern "C" fn sp_cosine(a: *const f64, b: *const f64, dim: usize, out_value: *mut f64) -> SpStatus {
    guard(|| {
        let a = input(a, dim, "a")?;
        let b = input(b, dim, "b")?;
        *out(out_value, "out_value")? = cosine_slices(a, b).map_err(semantic)?;
        Ok(())
    })
}

/// Intra-list similarity of `n` row-major `dim`-vectors: the mean pairwise
/// cosine with negatives clamped to zero.
///
/// # Safety
/// `vectors` points to `n * dim` doubles; `out_value` is writable.
#[no_mangle]
pub unsafe extern "C" fn sp_ils(vectors: *const f64, n: usize, dim: usize, out_value: *mut f64) -> SpStatus {
    guard(|| {
        let out_value = out(out_value, "out_value")?;
        if dim == 0 {
            return fail(SpStatus::InvalidArgument, "dim must be positive");
        }
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Failure(SpStatus::InvalidArgument, "n * dim overflows".into()))?;
        let data = input(vectors, len, "vectors")?;
        let ids: Vec<MovieId> = (0..n).map(|i| MovieId::from(i.to_string())).collect();
        let mut map = HashMap::with_capacity(n);
        for (id, row) in ids.iter().zip(data.chunks_exact(dim)) {
            let e = Embedding::new(row.to_vec()).or_else(|e| fail(SpStatus::InvalidArgument, e.to_string()))?;
            map.insert(id.clone(), e);
        }
        *out_value = compute_ils(&ids, &map).or_else(|e| fail(SpStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// A deterministic offline embedder, or null when `dim < 2`.
#[no_mangle]
pub extern "C" fn sp_mock_embedder_new(dim: usize, seed: u64) -> *mut SpEmbedder {
    if dim < 2 {
        set_error(Some("dim must be at least 2".into()));
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(SpEmbedder(MockEmbedder::new(dim, seed))))
}

/// # Safety
/// `embedder` is null or came from [`sp_mock_embedder_new`] and is not used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_embedder_free(embedder: *mut SpEmbedder) {
    if !embedder.is_null() {
        drop(Box::from_raw(embedder));
    }
}

/// Class of the edit `before -> after`: retained at similarity 0.95 and
/// above, reworded from 0.60, pruned below or when `after` is blank.
///
/// # Safety
/// `embedder` is a live handle; the strings are nul-terminated; the outputs
/// are writable.
#[no_mangle]
pub unsafe extern "C" fn sp_classify_edit(
    embedder: *const SpEmbedder,
    before: *const c_char,
    after: *const c_char,
    class_out: *mut SpEditClass,
    similarity_out: *mut f64,
) -> SpStatus {
    guard(|| {
        let embedder = embedder
            .as_ref()
            .map_or_else(|| fail(SpStatus::NullPointer, "embedder is null"), Ok)?;
        let (before, after) = (text(before, "before")?, text(after, "after")?);
        let class_out = out(class_out, "class_out")?;
        let similarity_out = out(similarity_out, "similarity_out")?;
        let (class, sim) = edits::classify(before, after, &embedder.0).map_err(|e| match e {
            EditError::EmptyBefore => Failure(SpStatus::InvalidArgument, e.to_string()),
            EditError::Provider(p) => Failure(SpStatus::Provider, p.to_string()),
            EditError::Semantic(s) => semantic(s),
        })?;
        *class_out = match class {
            EditClass::Retained => SpEditClass::Retained,
            EditClass::Reworded => SpEditClass::Reworded,
            EditClass::Pruned => SpEditClass::Pruned,
        };
        *similarity_out = sim;
        Ok(())
    })
}

/// The default policy: 10% or 10 ratings, checked daily.
#[no_mangle]
pub extern "C" fn sp_default_policy() -> SpPolicy {
    let p = RegenerationPolicy::default();
    SpPolicy {
        fraction_threshold: p.fraction_threshold,
        absolute_threshold: p.absolute_threshold,
        cadence_seconds: p.cadence.num_seconds(),
    }
}

fn instant(secs: i64, name: &str) -> Res<DateTime<Utc>> {
    DateTime::from_timestamp(secs, 0).map_or_else(|| fail(SpStatus::InvalidArgument, format!("{name} out of range")), Ok)
}

/// Whether a portrait generated at `base_count` ratings should be rebuilt
/// now that the user has `current_count`. Times are Unix seconds.
///
/// # Safety
/// `policy` and `out_value` are valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sp_should_regenerate(
    policy: *const SpPolicy,
    base_count: u64,
    current_count: u64,
    now: i64,
    last_check: i64,
    out_value: *mut bool,
) -> SpStatus {
    guard(|| {
        let p = policy
            .as_ref()
            .map_or_else(|| fail(SpStatus::NullPointer, "policy is null"), Ok)?;
        if !(p.fraction_threshold.is_finite() && p.fraction_threshold >= 0.0) || p.cadence_seconds < 0 {
            return fail(SpStatus::InvalidArgument, "policy thresholds must be non-negative");
        }
        let out_value = out(out_value, "out_value")?;
        let (now, last_check) = (instant(now, "now")?, instant(last_check, "last_check")?);
        let policy = RegenerationPolicy {
            fraction_threshold: p.fraction_threshold,
            absolute_threshold: p.absolute_threshold,
            cadence: Duration::seconds(p.cadence_seconds),
        };
        let record = GenerationRecord {
            user_id: "ffi".into(),
            portrait_version: 1,
            kind: GenerationKind::Initial,
            generated_at: last_check,
            input_cluster_ids: Vec::new(),
            ratings_count_at_generation: base_count,
            user_context: None,
            prompt_hash: String::new(),
            faithful_sentences: 0,
            longterm_sentences: 0,
        };
        *out_value = should_regenerate(&record, current_count, &policy, now, last_check)
            .or_else(|e| fail(SpStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// ANCOVA of `outcome` on group with `covariate` as a control. On success
/// `*result` owns a handle to release with [`sp_ancova_free`].
///
/// # Safety
/// The arrays hold `n` elements; `result` is writable.
#[no_mangle]
pub unsafe extern "C" fn sp_ancova(
    outcome: *const f64,
    covariate: *const f64,
    groups: *const i32,
    n: usize,
    result: *mut *mut SpAncova,
) -> SpStatus {
    guard(|| {
        let result = out(result, "result")?;
        *result = ptr::null_mut();
        let y = input(outcome, n, "outcome")?;
        let x = input(covariate, n, "covariate")?;
        let g = input(groups, n, "groups")?
            .iter()
            .map(|&c| match c {
                0 => Ok(Group::Reflected),
                1 => Ok(Group::Interacted),
                2 => Ok(Group::Collaborated),
                other => fail(SpStatus::InvalidArgument, format!("unknown group code {other}")),
            })
            .collect::<Res<Vec<_>>>()?;
        let r = stats::ancova("ffi", y, x, &g).map_err(stats_err)?;
        *result = Box::into_raw(Box::new(SpAncova(r)));
        Ok(())
    })
}

/// # Safety
/// `result` is null or came from [`sp_ancova`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_ancova_free(result: *mut SpAncova) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// F statistic of the group term, or NaN for a null handle.
///
/// # Safety
/// `result` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_ancova_f(result: *const SpAncova) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.f_statistic)
}

/// # Safety
/// `result` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_ancova_p(result: *const SpAncova) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.p_value)
}

/// Partial eta squared of the group term.
///
/// # Safety
/// `result` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_ancova_eta_squared(result: *const SpAncova) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.eta_squared)
}

/// Number of pairwise comparisons.
///
/// # Safety
/// `result` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_ancova_pair_count(result: *const SpAncova) -> usize {
    result.as_ref().map_or(0, |r| r.0.pairwise.len())
}

fn group_code(g: Group) -> SpGroup {
    match g {
        Group::Reflected => SpGroup::Reflected,
        Group::Interacted => SpGroup::Interacted,
        Group::Collaborated => SpGroup::Collaborated,
    }
}

/// Tukey-adjusted comparison `index`, in group order.
///
/// # Safety
/// `result` is a live handle; `pair` is writable.
#[no_mangle]
pub unsafe extern "C" fn sp_ancova_pair(result: *const SpAncova, index: usize, pair: *mut SpPair) -> SpStatus {
    guard(|| {
        let r = result
            .as_ref()
            .map_or_else(|| fail(SpStatus::NullPointer, "result is null"), Ok)?;
        let pair = out(pair, "pair")?;
        let c = r.0.pairwise.get(index).map_or_else(
            || fail(SpStatus::InvalidArgument, format!("pair {index} of {}", r.0.pairwise.len())),
            Ok,
        )?;
        *pair = SpPair {
            group_a: group_code(c.group_a),
            group_b: group_code(c.group_b),
            mean_difference: c.mean_difference,
            p_adjusted: c.p_adjusted,
        };
        Ok(())
    })
}

/// CDF of the studentized range for `k` means and `df` degrees of freedom
/// (pass infinity for the normal limit).
///
/// # Safety
/// `out_value` is writable.
#[no_mangle]
pub unsafe extern "C" fn sp_studentized_range_cdf(q: f64, k: usize, df: f64, out_value: *mut f64) -> SpStatus {
    guard(|| {
        let out_value = out(out_value, "out_value")?;
        if q.is_nan() || k < 2 || !(df > 0.0) {
            return fail(SpStatus::InvalidArgument, "need q not NaN, k >= 2 and df > 0");
        }
        *out_value = stats::studentized_range_cdf(q, k, df);
        Ok(())
    })
}
