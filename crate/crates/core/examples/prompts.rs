//! Prints the prompt pairs each model family receives.

use perturbex::prompts::{list_environments, ModelFamily, PromptBook};

fn main() -> perturbex::Result<()> {
    for family in ModelFamily::ALL {
        let book = PromptBook::new(family);
        let removal = book.removal()?;
        let replacement = book.replacement("boat", "seal")?;
        println!("[{family}]");
        println!("  removal +  {:?}", removal.positive);
        println!("  removal -  {:?}", removal.negative);
        println!("  boat    +  {:?}", replacement.positive);
        println!("  boat    -  {:?}", replacement.negative);
    }
    let book = PromptBook::new(ModelFamily::StableDiffusion);
    for env in list_environments() {
        let pair = book.background(env.name)?;
        println!("{:<12} {}", env.name, pair.positive);
    }
    Ok(())
}
