//! The bundled fixture files under `fixtures/` are generated by
//! `common::all_fixtures`; regenerate with
//! `cargo test -p lmprior --test fixtures -- --ignored`.

mod common;

#[test]
fn bundled_fixtures_are_current() {
    for (rel, contents) in common::all_fixtures() {
        let path = common::fixtures_dir().join(&rel);
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(on_disk, contents, "{rel} is stale");
    }
}

#[test]
#[ignore]
fn regenerate_fixtures() {
    common::write_fixtures(&common::fixtures_dir());
}
