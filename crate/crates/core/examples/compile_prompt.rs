//! Compiles the shipped isometric template against the Choto Sona attributes.
//!
//! ```text
//! cargo run --example compile_prompt
//! cargo run --example compile_prompt -- path/to/custom.prompt
//! ```

use heritage3d::fixtures;
use heritage3d::prompt::{compile_prompt, lint_attributes, PromptTemplate, DEFAULT_TEMPLATE_ID};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (id, template) = match std::env::args().nth(1) {
        Some(path) => (path.clone(), PromptTemplate::parse(std::fs::read_to_string(&path)?.trim_end())?),
        None => (DEFAULT_TEMPLATE_ID.to_string(), PromptTemplate::default_isometric()),
    };
    let attrs = fixtures::choto_sona_attributes();

    for issue in lint_attributes(&attrs, &template) {
        eprintln!("lint: {issue:?}");
    }
    let prompt = compile_prompt(&id, &template, &attrs)?;
    println!("{}", prompt.text);
    eprintln!("template {} / attributes {}", prompt.template_id, prompt.attr_digest);
    Ok(())
}
