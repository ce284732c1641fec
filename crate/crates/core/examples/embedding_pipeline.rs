//! Walks one query through tokenization, per-token vectors, pooling and
//! normalization, printing the shape at each step.

use iotase::embedder::{dot, hashed_embedder, Embedder};

fn main() -> anyhow::Result<()> {
    let pipeline = hashed_embedder();
    let text = "My son loves animals. I'd like to take him to a zoo!";
    let trace = pipeline.run(text)?;

    println!("sentences: {}", trace.tokens.sentences());
    for (i, row) in trace.tokens.token_ids.iter().enumerate() {
        println!("  sentence {i}: {} tokens, first ids {:?}", row.len(), &row[..row.len().min(4)]);
    }
    println!("token vectors per sentence: {:?}", trace.token_vectors.iter().map(Vec::len).collect::<Vec<_>>());
    for (i, v) in trace.sentence_vectors.iter().enumerate() {
        println!("  sentence {i} norm = {:.6}", dot(v, v).sqrt());
    }
    println!("embedding dimension {} norm {:.6}", trace.embedding.len(), dot(&trace.embedding, &trace.embedding).sqrt());

    let zoo = pipeline.embed_text("A zoo where families see wild animals.")?;
    let bank = pipeline.embed_text("A bank branch for deposits and loans.")?;
    println!("cosine(query, zoo)  = {:.4}", dot(&trace.embedding, &zoo));
    println!("cosine(query, bank) = {:.4}", dot(&trace.embedding, &bank));
    Ok(())
}
