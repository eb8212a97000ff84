// Bracketed sentiment trees with word vectors as leaf attributes.
//
// ```bash
// cargo run --example parse_sst
// ```

use nft::data::{attach_attributes, parse_ptb, serialize_ptb, EmbeddingTable};

pub fn run_example() -> nft::Result<()> {
    let text = "(3 (2 (2 The) (2 movie)) (4 (3 is) (4 Great)))";
    let tree = parse_ptb(text)?;
    println!("{} nodes, labels {:?}", tree.len(), tree.labels().expect("labeled"));
    for (v, tok) in tree.tokens().iter().enumerate() {
        if let Some(t) = tok {
            println!("  leaf {v}: {t}");
        }
    }
    assert_eq!(serialize_ptb(&tree)?, text);

    let vectors = "the 0.1 0.2\nmovie 0.3 -0.1\ngreat 0.9 0.8\n";
    let table = EmbeddingTable::from_reader(vectors.as_bytes())?;
    let tree = attach_attributes(tree, &table);
    println!("attribute size {}", tree.attr_size());
    for (v, x) in tree.attributes().iter().enumerate() {
        println!("  x_{v} = {x:?}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nft::Result<()> {
    run_example()
}
