//! The file-backed document store: paths, partial updates and listings.

use emotrack::{Document, DocumentPath, Store};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = Store::open(dir.path())?;

    let records = DocumentPath::parse("Users/alice/Mood Records")?;
    let first = records.child("2024-04-22 20:30:00")?;
    store.put_document(
        &first,
        &Document::new()
            .with("Before Watch Mood", "Not good")
            .with("Start Watch Time", "2024-04-22 20:30:00"),
    )?;
    store.update_fields(&first, Document::new().with("After Watch Mood", "Good"))?;
    store.put_document(
        &records.child("2024-04-23 08:00:00")?,
        &Document::new().with("Before Watch Mood", "Okay"),
    )?;

    for (name, doc) in store.list_collection(&records)? {
        println!("{name}: {}", String::from_utf8(doc.to_canonical_json())?);
    }
    println!("on disk: {}", store.document_file(&first).display());

    store.delete_document(&first)?;
    println!("after delete: {:?}", store.try_get_document(&first)?);
    if let Err(e) = DocumentPath::parse("Users/a/b") {
        println!("rejected: {e}");
    }
    Ok(())
}
