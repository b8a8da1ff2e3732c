use finsql_core::entity::{parse_entity_reply, render_entity_prompt};
use finsql_core::golden::{example_entities, EXAMPLE_ENTITY_REPLY, EXAMPLE_TASK};
use finsql_core::llm::{Gateway, ScriptedProvider};
use finsql_core::prompt;
use sha2::{Digest, Sha256};
use std::sync::Arc;

fn pinned(name: &str) -> String {
    let path = format!("{}/assets/prompts/{name}.sha256", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap().trim().to_string()
}

fn sha(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[test]
fn rendered_templates_match_pinned_hashes() {
    assert_eq!(
        sha(&prompt::entity_extraction(EXAMPLE_TASK)),
        pinned("entity_extraction")
    );
    assert_eq!(sha(&prompt::schema_description()), pinned("schema_description"));
    let sample = "stock_code  data\n----------  ----\nHDB         {0.64} {{x}}";
    assert_eq!(sha(&prompt::self_correction(sample)), pinned("self_correction"));
}

#[test]
fn example_task_round_trips_through_a_scripted_provider() {
    let bundle = render_entity_prompt(EXAMPLE_TASK);
    let script = format!("@@ rule contains: {EXAMPLE_TASK}\n@@ reply\n{EXAMPLE_ENTITY_REPLY}");
    let gw = Gateway::new(Arc::new(ScriptedProvider::parse(&script).unwrap()));
    let reply = gw.complete(&bundle).unwrap();
    let parsed = parse_entity_reply(&reply.text).unwrap();
    assert_eq!(parsed.entities, example_entities());
}
