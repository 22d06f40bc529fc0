//! Shared program texts for unit tests.

/// One loop, two restrict array params; the `b` load has no dependence in
/// the nest, the `a` load conflicts with the `a` store.
pub const LISTING1: &str = "\
fn pnd_example(arr a restrict, arr b restrict, int n) {
  for i = 0 to n step 1 {
    load r0 = b[i]
    load r1 = a[i]
    alu r2 = r0 + r1
    store a[i] = r2
  }
}
";

/// Two adjacent loops: the first writes `b`, the second reads it. The
/// labelling pass is nest-scoped, so the `b` load in the second loop is
/// still labelled.
pub const LISTING2: &str = "\
fn pnd_limitation(arr a restrict, arr b restrict, int n) {
  for i = 0 to n step 1 {
    store b[i] = i
  }
  for j = 0 to n step 1 {
    load r0 = b[j]
    load r1 = a[j]
    alu r2 = r0 + r1
    store a[j] = r2
  }
}
";
