//! Record model exchanges to a cassette, then answer the same requests
//! offline from it.

use simweave::llm::{Cassette, Gateway, LlmRequest, ScriptedProvider};
use simweave::prompts::TemplateId;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::temp_dir().join(format!("simweave-example-{}.ndjson", std::process::id()));
    let provider = ScriptedProvider::new()
        .reply("verification", "PASS")
        .reply("suggest_change", "Type 3.")
        .into_arc();

    let recorder = Gateway::record(provider, &path)?;
    let verify = LlmRequest::user(TemplateId::Verification.as_str(), "Did every test pass?");
    let classify = LlmRequest::user(TemplateId::SuggestChange.as_str(), "Make the slider wider");
    println!("live:   {:?}", recorder.complete(&verify).await?);
    println!("live:   {:?}", recorder.complete(&classify).await?);

    let replay = Gateway::replay(Cassette::load(&path)?);
    println!("replay: {:?}", replay.complete(&verify).await?);
    println!("replay: {:?}", replay.complete(&classify).await?);

    let unseen = LlmRequest::user(TemplateId::Verification.as_str(), "Something new");
    println!("unseen: {}", replay.complete(&unseen).await.unwrap_err());
    std::fs::remove_file(&path)?;
    Ok(())
}
